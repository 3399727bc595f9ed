//! Red/blue skeleton decomposition of a supercritical population.
//!
//! Blue cells have an infinite line of descent, red cells are doomed. Given
//! the population at time `t`, colours are i.i.d. with blue probability
//! `p = 1 - k/B`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::population::{PopulationConfig, PopulationRun, PopulationSimulator, PopulationSnapshot, TreeMode};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkeletonRates {
    /// Survival probability.
    pub p: f64,
    /// Extinction probability `k / B`.
    pub w: f64,
    pub blue_branch: f64,
    pub blue_jump: f64,
    pub red_branch: f64,
    pub red_death: f64,
}

impl SkeletonRates {
    pub fn total_blue(&self) -> f64 {
        self.blue_branch + self.blue_jump
    }
}

pub fn skeleton_rates(params: &ModelParams) -> Result<SkeletonRates> {
    let (b, k) = (params.b, params.k);
    if b <= k {
        return Err(Error::NotSupercritical { b, k });
    }
    let w = k / b;
    let p = 1.0 - w;
    Ok(SkeletonRates { p, w, blue_branch: b * p, blue_jump: 2.0 * b * w, red_branch: k, red_death: b })
}

/// I.i.d. Bernoulli(`p`) blue marks for the cells of a snapshot, drawn from
/// the stream `key`.
pub fn assign_colours(snapshot: &PopulationSnapshot, p: f64, key: StreamKey) -> Vec<bool> {
    let mut rng = key.rng();
    snapshot.masses.iter().map(|_| rng.bernoulli(p)).collect()
}

/// Subcritical red process from one red cell.
pub fn simulate_red_population(params: &ModelParams, config: PopulationConfig, key: StreamKey) -> Result<PopulationRun> {
    Ok(PopulationSimulator::new(params, config, TreeMode::Red)?.run(key))
}

/// Blue skeleton from one blue cell, optionally dressed with red trees.
pub fn simulate_blue_population(
    params: &ModelParams,
    config: PopulationConfig,
    key: StreamKey,
    dress: bool,
) -> Result<PopulationRun> {
    Ok(PopulationSimulator::new(params, config, TreeMode::Blue { dress })?.run(key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;
    use crate::population::Colour;

    #[test]
    fn rates_for_b03_k01() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform);
        let r = skeleton_rates(&p).unwrap();
        assert!((r.w - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.p - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.blue_branch - 0.2).abs() < 1e-15);
        assert!((r.blue_jump - 0.2).abs() < 1e-15);
        assert_eq!(r.red_branch, 0.1);
        assert_eq!(r.red_death, 0.3);
        assert!((0.3 * (r.p + 2.0 * r.w) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn no_killing_means_all_blue() {
        let p = ModelParams::new(1.0, 0.3, 0.0, 1.0, KernelShape::Uniform);
        let r = skeleton_rates(&p).unwrap();
        assert_eq!((r.p, r.w, r.blue_jump), (1.0, 0.0, 0.0));
    }

    #[test]
    fn subcritical_is_rejected() {
        let p = ModelParams::new(1.0, 0.1, 0.1, 1.0, KernelShape::Uniform);
        assert!(matches!(skeleton_rates(&p), Err(Error::NotSupercritical { .. })));
        let cfg = PopulationConfig::new(1.0, vec![1.0]);
        assert!(simulate_blue_population(&p, cfg, StreamKey::root(0), false).is_err());
    }

    #[test]
    fn blue_never_dies_and_dressing_adds_red() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform);
        for i in 0..50 {
            let cfg = PopulationConfig::new(1.0, vec![1.0, 5.0, 10.0]);
            let key = StreamKey::root(3).derive(i);
            let bare = simulate_blue_population(&p, cfg.clone(), key, false).unwrap();
            let dressed = simulate_blue_population(&p, cfg, key, true).unwrap();
            for (b, d) in bare.snapshots.iter().zip(&dressed.snapshots) {
                assert!(b.n >= 1);
                let blues = d.colours.as_ref().unwrap().iter().filter(|&&c| c == Colour::Blue).count();
                assert_eq!(blues, b.n);
            }
        }
    }

    #[test]
    fn all_blue_when_p_is_one() {
        let snap = PopulationSnapshot {
            time: 0.0,
            masses: vec![0.5; 10],
            labels: None,
            colours: None,
            n: 10,
            m: 10.0,
            s: None,
        };
        assert!(assign_colours(&snap, 1.0, StreamKey::root(1)).iter().all(|&b| b));
    }
}
