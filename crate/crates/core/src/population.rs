//! Event-driven simulation of the whole population on the Ulam-Harris tree.
//!
//! Each cell is handled once, depth first, with an explicit stack. Its random
//! stream is keyed by its label, so the tree does not depend on traversal
//! order and replicas can run on any number of threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::model::ModelParams;
use crate::numeric::pairwise_sum;
use crate::rng::{replicate, StreamKey, StreamRng};
use crate::spectral::{leading_eigenvalue, Regime, SpectralProfile};

pub const DEFAULT_MAX_CELLS: usize = 1_000_000;

/// Abort a replica once this many cells per `max_cells` have been processed.
const WORK_FACTOR: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    Plain,
    Blue,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fate {
    Fragmented,
    Killed,
    AliveAtHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub label: String,
    pub colour: Colour,
    pub birth_time: f64,
    /// `None` when the cell is alive at the horizon.
    pub death_time: Option<f64>,
    pub birth_mass: f64,
    pub fate: Fate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub time: f64,
    pub masses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colours: Option<Vec<Colour>>,
    pub n: usize,
    /// `e^{-lambda* t} N`.
    pub m: f64,
    /// Supermartingale value, in the transient regime with positive `lambda`.
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRun {
    pub snapshots: Vec<PopulationSnapshot>,
    /// The run hit `max_cells` and must not be used for estimates.
    pub truncated: bool,
    pub events: Vec<CellRecord>,
}

/// Which branching rules the tree follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMode {
    /// The original process: kill at rate `k`, split at rate `B`.
    Full,
    /// Doomed cells: split at rate `k`, die at rate `B`.
    Red,
    /// Immortal skeleton: two-blue split at rate `Bp`, displacement at rate
    /// `2Bw`; with `dress` each displacement plants a red tree.
    Blue { dress: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub snapshot_times: Vec<f64>,
    pub max_cells: usize,
    pub x0: f64,
    pub record_labels: bool,
    pub record_events: bool,
}

impl PopulationConfig {
    pub fn new(x0: f64, snapshot_times: Vec<f64>) -> Self {
        Self { snapshot_times, max_cells: DEFAULT_MAX_CELLS, x0, record_labels: false, record_events: false }
    }

    fn validate(&self, c: f64) -> Result<()> {
        if self.snapshot_times.is_empty() {
            return Err(Error::InvalidArgument("no snapshot times".into()));
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
            || self.snapshot_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument("snapshot times must be nonnegative and increasing".into()));
        }
        if self.max_cells == 0 {
            return Err(Error::InvalidArgument("max_cells must be at least 1".into()));
        }
        if !(self.x0 > 0.0 && self.x0 <= c) {
            return Err(Error::InvalidArgument(format!("initial mass {} outside (0, {c}]", self.x0)));
        }
        Ok(())
    }
}

struct Cell {
    key: StreamKey,
    birth: f64,
    mass: f64,
    colour: Colour,
    label: String,
}

#[derive(Default)]
struct Slot {
    masses: Vec<f64>,
    labels: Vec<String>,
    colours: Vec<Colour>,
}

/// A simulator bound to one model, tree mode and snapshot schedule.
#[derive(Debug, Clone)]
pub struct PopulationSimulator {
    params: ModelParams,
    profile: SpectralProfile,
    config: PopulationConfig,
    mode: TreeMode,
}

impl PopulationSimulator {
    pub fn new(params: &ModelParams, config: PopulationConfig, mode: TreeMode) -> Result<Self> {
        config.validate(params.c)?;
        if matches!(mode, TreeMode::Red | TreeMode::Blue { .. }) && params.b <= params.k {
            return Err(Error::NotSupercritical { b: params.b, k: params.k });
        }
        let profile = leading_eigenvalue(params)?;
        Ok(Self { params: params.clone(), profile, config, mode })
    }

    pub fn config(&self) -> &PopulationConfig {
        &self.config
    }

    pub fn profile(&self) -> &SpectralProfile {
        &self.profile
    }

    fn rate(&self, colour: Colour) -> f64 {
        let (b, k) = (self.params.b, self.params.k);
        match colour {
            Colour::Plain | Colour::Red => b + k,
            // Bp + 2Bw = B + k
            Colour::Blue => b + k,
        }
    }

    fn initial_colour(&self) -> Colour {
        match self.mode {
            TreeMode::Full => Colour::Plain,
            TreeMode::Red => Colour::Red,
            TreeMode::Blue { .. } => Colour::Blue,
        }
    }

    fn mass_at(&self, cell: &Cell, t: f64) -> f64 {
        (cell.mass * (self.params.a * (t - cell.birth)).exp()).min(self.params.c)
    }

    /// Simulate one replica.
    pub fn run(&self, key: StreamKey) -> PopulationRun {
        self.grow(key, false).0
    }

    /// `true` when no cell is alive at the last snapshot time. Stops at the
    /// first surviving cell found.
    pub fn extinct(&self, key: StreamKey) -> bool {
        self.grow(key, true).1
    }

    /// Replicas `0..n` of `seed` in parallel; output is in replica order.
    pub fn run_replicas(&self, seed: u64, n: usize) -> Vec<PopulationRun> {
        replicate(seed, n, |_, key| self.run(key))
    }

    fn grow(&self, key: StreamKey, stop_on_survivor: bool) -> (PopulationRun, bool) {
        let cfg = &self.config;
        let times = &cfg.snapshot_times;
        let horizon = *times.last().expect("validated");
        let keep_labels = cfg.record_labels || cfg.record_events;
        let (b, k) = (self.params.b, self.params.k);
        let mut slots: Vec<Slot> = times.iter().map(|_| Slot::default()).collect();
        let mut events = Vec::new();
        let mut truncated = false;
        let mut processed = 0usize;
        let mut stack = vec![Cell {
            key,
            birth: 0.0,
            mass: cfg.x0,
            colour: self.initial_colour(),
            label: String::new(),
        }];
        while let Some(cell) = stack.pop() {
            processed += 1;
            if processed > WORK_FACTOR.saturating_mul(cfg.max_cells) {
                truncated = true;
                break;
            }
            let mut rng: StreamRng = cell.key.rng();
            let death = cell.birth + rng.exp(self.rate(cell.colour));
            let first = times.partition_point(|&t| t < cell.birth);
            for (i, &t) in times.iter().enumerate().skip(first) {
                if t >= death {
                    break;
                }
                if stop_on_survivor && i + 1 == times.len() {
                    return (PopulationRun { snapshots: Vec::new(), truncated: false, events }, false);
                }
                let slot = &mut slots[i];
                slot.masses.push(self.mass_at(&cell, t));
                slot.colours.push(cell.colour);
                if cfg.record_labels {
                    slot.labels.push(cell.label.clone());
                }
                if slot.masses.len() > cfg.max_cells {
                    truncated = true;
                }
            }
            if truncated {
                break;
            }
            if death > horizon {
                if cfg.record_events {
                    events.push(self.record(&cell, None, Fate::AliveAtHorizon));
                }
                continue;
            }
            let x = self.mass_at(&cell, death);
            let u = rng.open01();
            // children as (bit, colour); `None` drops that side
            let (fate, children): (Fate, [Option<Colour>; 2]) = match cell.colour {
                Colour::Plain => {
                    if u < k / (b + k) {
                        (Fate::Killed, [None, None])
                    } else {
                        (Fate::Fragmented, [Some(Colour::Plain), Some(Colour::Plain)])
                    }
                }
                Colour::Red => {
                    if u < k / (b + k) {
                        (Fate::Fragmented, [Some(Colour::Red), Some(Colour::Red)])
                    } else {
                        (Fate::Killed, [None, None])
                    }
                }
                Colour::Blue => {
                    let p = 1.0 - k / b;
                    if u < b * p / (b + k) {
                        (Fate::Fragmented, [Some(Colour::Blue), Some(Colour::Blue)])
                    } else {
                        let dress = matches!(self.mode, TreeMode::Blue { dress: true });
                        let red = if dress { Some(Colour::Red) } else { None };
                        // the blue line keeps xV or x(1-V) with a fair side coin
                        if rng.bernoulli(0.5) {
                            (Fate::Fragmented, [Some(Colour::Blue), red])
                        } else {
                            (Fate::Fragmented, [red, Some(Colour::Blue)])
                        }
                    }
                }
            };
            if cfg.record_events {
                events.push(self.record(&cell, Some(death), fate));
            }
            if fate == Fate::Killed {
                continue;
            }
            let v = self.params.kernel.sample(&mut rng);
            let masses = [x * v, x * (1.0 - v)];
            // push bit 1 first so bit 0 is explored first
            for bit in [1u8, 0] {
                if let Some(colour) = children[bit as usize] {
                    let label = if keep_labels {
                        let mut l = cell.label.clone();
                        l.push(if bit == 0 { '0' } else { '1' });
                        l
                    } else {
                        String::new()
                    };
                    stack.push(Cell { key: cell.key.child(bit), birth: death, mass: masses[bit as usize], colour, label });
                }
            }
        }
        let extinct = slots.last().is_some_and(|s| s.masses.is_empty());
        let record_colours = !matches!(self.mode, TreeMode::Full);
        let snapshots = times
            .iter()
            .zip(slots)
            .map(|(&t, slot)| {
                let n = slot.masses.len();
                let s = self.s_value(&slot.masses, t);
                PopulationSnapshot {
                    time: t,
                    n,
                    m: (-self.profile.lambda_star * t).exp() * n as f64,
                    s,
                    labels: cfg.record_labels.then_some(slot.labels),
                    colours: record_colours.then_some(slot.colours),
                    masses: slot.masses,
                }
            })
            .collect();
        (PopulationRun { snapshots, truncated, events }, extinct)
    }

    fn record(&self, cell: &Cell, death: Option<f64>, fate: Fate) -> CellRecord {
        CellRecord {
            label: cell.label.clone(),
            colour: cell.colour,
            birth_time: cell.birth,
            death_time: death,
            birth_mass: cell.mass,
            fate,
        }
    }

    fn s_value(&self, masses: &[f64], t: f64) -> Option<f64> {
        if self.profile.regime == Regime::T && self.profile.lambda > 0.0 {
            Some(supermartingale_sum(masses, t, &self.profile, self.params.c, self.config.x0))
        } else {
            None
        }
    }
}

fn supermartingale_sum(masses: &[f64], t: f64, profile: &SpectralProfile, c: f64, x0: f64) -> f64 {
    let q0 = profile.q0;
    let terms: Vec<f64> = masses.iter().map(|&x| (x / c).powf(q0)).collect();
    (-profile.lambda * t).exp() * pairwise_sum(&terms) / (x0 / c).powf(q0)
}

/// Simulate the full process from a single cell of mass `config.x0`.
pub fn simulate_population(params: &ModelParams, config: PopulationConfig, key: StreamKey) -> Result<PopulationRun> {
    Ok(PopulationSimulator::new(params, config, TreeMode::Full)?.run(key))
}

/// `<f, Z(t)>` for a snapshot.
pub fn empirical_functional(snapshot: &PopulationSnapshot, f: &TestFunction, c: f64) -> f64 {
    let vals: Vec<f64> = snapshot.masses.iter().map(|&x| f.eval(x, c)).collect();
    pairwise_sum(&vals)
}

/// `S_t = e^{-lambda t} <l, Z(t)> / l(x0)` with `l(x) = (x/c)^{q0}`.
pub fn supermartingale_value(
    snapshot: &PopulationSnapshot,
    profile: &SpectralProfile,
    c: f64,
    x0: f64,
) -> Result<f64> {
    if profile.regime != Regime::T {
        return Err(Error::WrongRegime { expected: "T", found: profile.regime });
    }
    if profile.lambda <= 0.0 {
        return Err(Error::NonpositiveLambda(profile.lambda));
    }
    Ok(supermartingale_sum(&snapshot.masses, snapshot.time, profile, c, x0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;

    #[test]
    fn no_events_is_deterministic_flow() {
        let p = ModelParams::new(0.5, 0.0, 0.0, 1.0, KernelShape::Uniform);
        let cfg = PopulationConfig::new(0.5, vec![0.0, 1.0, 2.0, 10.0]);
        let run = simulate_population(&p, cfg, StreamKey::root(1)).unwrap();
        for s in &run.snapshots {
            assert_eq!(s.n, 1);
            assert!((s.masses[0] - (0.5 * (0.5 * s.time).exp()).min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn children_conserve_mass() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform);
        let mut cfg = PopulationConfig::new(1.0, vec![8.0]);
        cfg.record_events = true;
        let run = simulate_population(&p, cfg, StreamKey::root(4)).unwrap();
        let by_label: std::collections::HashMap<&str, &CellRecord> =
            run.events.iter().map(|e| (e.label.as_str(), e)).collect();
        let mut checked = 0;
        for e in &run.events {
            if e.fate != Fate::Fragmented {
                continue;
            }
            let d = e.death_time.unwrap();
            let x = (e.birth_mass * (d - e.birth_time).exp()).min(1.0);
            let c0 = by_label[format!("{}0", e.label).as_str()].birth_mass;
            let c1 = by_label[format!("{}1", e.label).as_str()].birth_mass;
            assert!((c0 + c1 - x).abs() <= 4.0 * f64::EPSILON * x);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn martingale_value_is_exact() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform);
        let run = simulate_population(&p, PopulationConfig::new(1.0, vec![0.0, 3.0]), StreamKey::root(2)).unwrap();
        for s in &run.snapshots {
            assert_eq!(s.m, (-0.2 * s.time).exp() * s.n as f64);
            assert!(s.s.is_none());
        }
        assert_eq!(run.snapshots[0].n, 1);
    }

    #[test]
    fn supermartingale_starts_at_one() {
        let p = ModelParams::new(0.3, 0.5, 0.1, 1.0, KernelShape::Uniform);
        let run = simulate_population(&p, PopulationConfig::new(0.7, vec![0.0, 1.0]), StreamKey::root(2)).unwrap();
        assert!((run.snapshots[0].s.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_is_flagged() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 1.0, KernelShape::Uniform);
        let mut cfg = PopulationConfig::new(1.0, vec![20.0]);
        cfg.max_cells = 100;
        let run = simulate_population(&p, cfg, StreamKey::root(3)).unwrap();
        assert!(run.truncated);
    }

    #[test]
    fn rejects_bad_schedule() {
        let p = ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform);
        assert!(simulate_population(&p, PopulationConfig::new(1.0, vec![2.0, 1.0]), StreamKey::root(0)).is_err());
        assert!(simulate_population(&p, PopulationConfig::new(1.5, vec![1.0]), StreamKey::root(0)).is_err());
    }
}
