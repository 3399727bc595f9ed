//! The invariant measure `m` of the tagged cell and its normalization `nu`.
//!
//! In the log coordinate `u = ln(c / x)` the measure `m` is simply `W(du)`:
//! an atom `1/a` at `u = 0` (the cap) plus the density `W'(u)`. Hence
//! `m((x, c]) = W(ln(c/x))` and the total mass is `W(inf)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::model::ModelParams;
use crate::numeric::{bisect, integrate_with_breaks};
use crate::rng::StreamRng;
use crate::scale::{ScaleConfig, ScaleFunction};
use crate::spectral::{classify_regime, Regime};

/// Relative tolerance for integrals against `m` and `nu`.
pub const NU_QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    c: f64,
    atom: f64,
    total: f64,
    regime: Regime,
    scale: ScaleFunction,
    breaks: Vec<f64>,
}

/// Header summary of an [`InvariantMeasure`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureSummary {
    pub atom_weight: f64,
    /// `+inf` in the null-recurrent regime.
    pub total_mass: f64,
    pub normalization: f64,
    pub nu_atom: f64,
    pub regime: Regime,
}

/// Assemble `m` from the scale function.
pub fn build_invariant(params: &ModelParams) -> Result<InvariantMeasure> {
    build_invariant_with(params, ScaleConfig::default())
}

pub fn build_invariant_with(params: &ModelParams, config: ScaleConfig) -> Result<InvariantMeasure> {
    let regime = classify_regime(params);
    if regime == Regime::T {
        return Err(Error::WrongRegime { expected: "PR, ER or NR", found: regime });
    }
    let scale = ScaleFunction::new(params, config)?;
    let x_end = scale.x_end();
    let mut breaks: Vec<f64> = (1..x_end.floor() as usize).map(|k| k as f64).collect();
    for (v, _) in params.kernel.shape.atoms() {
        let j = -v.ln();
        let mut t = j;
        while t < x_end {
            breaks.push(t);
            t += j;
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let atom = 1.0 / params.a;
    let mass_upto = |u: f64| atom + integrate_with_breaks(|s| scale.w_prime(s), 0.0, u, &breaks, NU_QUAD_TOL, 0.0);
    // The drift sign already separates NR; a non-negative fitted tail rate in
    // a recurrent model means the table is too short to see convergence.
    let finite = regime != Regime::NR && scale.tail_rate() < 0.0;
    let total = if finite {
        let body = mass_upto(x_end);
        // exponential tail int_X^inf W'(X) e^{s (u - X)} du
        body - scale.w_prime(x_end) / scale.tail_rate()
    } else {
        f64::INFINITY
    };
    Ok(InvariantMeasure { c: params.c, atom, total, regime, scale, breaks })
}

impl InvariantMeasure {
    pub fn atom_weight(&self) -> f64 {
        self.atom
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn scale(&self) -> &ScaleFunction {
        &self.scale
    }

    pub fn summary(&self) -> MeasureSummary {
        MeasureSummary {
            atom_weight: self.atom,
            total_mass: self.total,
            normalization: if self.is_finite() { 1.0 / self.total } else { 1.0 },
            nu_atom: if self.is_finite() { self.atom / self.total } else { f64::NAN },
            regime: self.regime,
        }
    }

    /// Density of `m` on (0, c): `W'(ln(c/x)) / x`.
    pub fn density(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < self.c) {
            return 0.0;
        }
        self.scale.w_prime((self.c / x).ln()) / x
    }

    /// `<f, m>` for a function given in the log coordinate, `g(u) = f(c e^{-u})`.
    /// `extra_breaks` are points in `u` where `g` jumps.
    pub fn m_integral<G: Fn(f64) -> f64>(&self, g: G, extra_breaks: &[f64]) -> f64 {
        let x_end = self.scale.x_end();
        let mut breaks = self.breaks.clone();
        breaks.extend(extra_breaks.iter().copied().filter(|&u| u > 0.0 && u < x_end));
        breaks.sort_by(f64::total_cmp);
        let body = integrate_with_breaks(|u| g(u) * self.scale.w_prime(u), 0.0, x_end, &breaks, NU_QUAD_TOL, 0.0);
        let rate = self.scale.tail_rate();
        let span = if rate < 0.0 { 60.0 / -rate } else { 60.0 };
        let tail_breaks: Vec<f64> = extra_breaks.iter().copied().filter(|&u| u > x_end).collect();
        let tail = integrate_with_breaks(
            |u| g(u) * self.scale.w_prime(u),
            x_end,
            x_end + span,
            &tail_breaks,
            NU_QUAD_TOL,
            0.0,
        );
        self.atom * g(0.0) + body + tail
    }

    /// `<f, m>`.
    pub fn m_expectation(&self, f: &TestFunction) -> f64 {
        let c = self.c;
        let breaks: Vec<f64> = f.breakpoints(c).into_iter().map(|t| (c / t).ln()).collect();
        self.m_integral(|u| f.eval(c * (-u).exp(), c), &breaks)
    }

    fn require_probability(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::WrongRegime { expected: "PR or ER", found: self.regime })
        }
    }

    /// `<f, nu>`.
    pub fn nu_expectation(&self, f: &TestFunction) -> Result<f64> {
        self.require_probability()?;
        Ok(self.m_expectation(f) / self.total)
    }

    /// `nu({c})`.
    pub fn nu_atom(&self) -> Result<f64> {
        self.require_probability()?;
        Ok(self.atom / self.total)
    }

    /// `nu((0, x])`.
    pub fn nu_cdf(&self, x: f64) -> f64 {
        if x >= self.c {
            1.0
        } else if x <= 0.0 {
            0.0
        } else {
            1.0 - self.scale.w((self.c / x).ln()) / self.total
        }
    }

    /// `nu((0, x))`.
    pub fn nu_cdf_left(&self, x: f64) -> f64 {
        if x >= self.c {
            if x == self.c {
                1.0 - self.atom / self.total
            } else {
                1.0
            }
        } else {
            self.nu_cdf(x)
        }
    }

    /// Draw from `nu` with a single uniform: the atom with probability
    /// `nu({c})`, otherwise invert `u -> W(u) / W(inf)` by bisection.
    pub fn sample(&self, rng: &mut StreamRng) -> Result<f64> {
        self.require_probability()?;
        let target = rng.open01() * self.total;
        if target <= self.atom {
            return Ok(self.c);
        }
        let mut hi = 1.0;
        while self.scale.w(hi) < target {
            hi *= 2.0;
            if hi > 1e4 {
                break;
            }
        }
        let u = bisect(|u| self.scale.w(u) - target, 0.0, hi, 1e-13);
        Ok(self.c * (-u).exp())
    }
}
