//! Laplace exponents, the cumulant and the quantities derived from them:
//! its minimizer, the leading eigenvalue, the right inverse of the tagged
//! cell's Laplace exponent, the regime of the tagged cell and the closed-form
//! Laplace transform of its return time to the cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::newton_bracketed;

/// Absolute tolerance on `a - int(-ln v) rho(dv)` below which the model is
/// treated as null recurrent.
pub const NR_TOL: f64 = 1e-12;
/// Target for `|kappa'(q0)|`.
pub const ARGINF_TOL: f64 = 1e-12;

/// Long-run behaviour of the tagged cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Transient: `a < int(-ln v) rho(dv)`.
    T,
    /// Null recurrent.
    NR,
    /// Positive recurrent without a finite negative moment.
    PR,
    /// Positive recurrent with `int v^{-r} rho(dv) < inf` for some `r > 0`.
    ER,
}

impl Regime {
    pub fn is_positive_recurrent(self) -> bool {
        matches!(self, Regime::PR | Regime::ER)
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, Regime::T)
    }
}

/// `kappa(q) = a q + int v^q rho(dv) - (B + k)`.
pub fn cumulant(p: &ModelParams, q: f64) -> Result<f64> {
    Ok(p.a * q + p.kernel.mellin(q)? - (p.b + p.k))
}

/// Derivative of `kappa` (equivalently of `psi_eta`) of order 1 or 2.
pub fn cumulant_derivative(p: &ModelParams, q: f64, order: u32) -> Result<f64> {
    let m = p.kernel.total_mass() * p.kernel.shape.log_moment(q, order)?;
    Ok(if order == 1 { p.a + m } else { m })
}

/// Laplace exponent of the tagged cell's log-mass Levy process,
/// `psi_eta(q) = a q + int (v^q - 1) rho(dv)`.
pub fn psi_eta(p: &ModelParams, q: f64) -> Result<f64> {
    Ok(p.a * q + p.kernel.mellin(q)? - p.kernel.total_mass())
}

/// Laplace exponent of the locally-largest cell's log-mass process,
/// `psi_xi(q) = -k + a q - int (1 - u^q) Pi(du)`.
pub fn psi_xi(p: &ModelParams, q: f64) -> Result<f64> {
    let threshold = p.kernel.shape.divergence_threshold();
    // Pi lives on [1/2, 1) so every real order is finite.
    let _ = threshold;
    Ok(-p.k + p.a * q - p.kernel.largest_expect(|u| 1.0 - u.powf(q)))
}

/// Minimizer of the cumulant over `q >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantMinimum {
    pub q0: f64,
    pub inf_kappa: f64,
    /// Set when `kappa'(0) >= 0`, so the infimum over `q >= 0` sits at 0.
    pub at_boundary: bool,
}

/// Locate `q0 = arginf kappa` over `[0, inf)` by safeguarded Newton on
/// `kappa'`.
pub fn arginf_cumulant(p: &ModelParams) -> Result<CumulantMinimum> {
    let d0 = cumulant_derivative(p, 0.0, 1)?;
    if d0 >= 0.0 {
        return Ok(CumulantMinimum { q0: 0.0, inf_kappa: cumulant(p, 0.0)?, at_boundary: true });
    }
    let q0 = increasing_root(
        |q| cumulant_derivative(p, q, 1),
        |q| cumulant_derivative(p, q, 2),
        0.0,
        ARGINF_TOL,
    )?;
    Ok(CumulantMinimum { q0, inf_kappa: cumulant(p, q0)?, at_boundary: false })
}

/// Root of an increasing function that is negative at `lo`; the upper end of
/// the bracket is grown geometrically.
fn increasing_root<F, D>(f: F, df: D, lo: f64, ftol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Result<f64>,
{
    let mut hi = lo.abs().max(1.0);
    let mut tries = 0;
    while f(lo + hi)? < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::NoConvergence("root bracket"));
        }
    }
    let fv = |x: f64| f(x).unwrap_or(f64::NAN);
    let dv = |x: f64| df(x).unwrap_or(f64::NAN);
    Ok(newton_bracketed(fv, dv, lo, lo + hi, ftol))
}

/// Classify the tagged-cell regime from the sign of `psi_eta'(0)` and the
/// negative moments of rho.
pub fn classify_regime(p: &ModelParams) -> Regime {
    let drift = p.a - p.kernel.log_moment();
    if drift.abs() <= NR_TOL {
        Regime::NR
    } else if drift < 0.0 {
        Regime::T
    } else if p.kernel.neg_moment_threshold() > 0.0 {
        Regime::ER
    } else {
        Regime::PR
    }
}

/// Everything the eigen-analysis derives from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    /// `B - k = kappa(0)`.
    pub lambda_star: f64,
    /// `arginf kappa` over `q >= 0`.
    pub q0: f64,
    pub q0_at_boundary: bool,
    pub inf_kappa: f64,
    /// `inf_{q >= 0} psi_eta(q) = inf kappa - kappa(0)`.
    pub inf_psi_eta: f64,
    /// Leading eigenvalue.
    pub lambda: f64,
    /// `lambda* + max(inf psi_eta, -2B)`.
    pub q_star: f64,
    pub regime: Regime,
    /// `psi_eta'(0) = a - int(-ln v) rho(dv)`.
    pub mean_drift: f64,
}

/// Assemble the [`SpectralProfile`].
pub fn leading_eigenvalue(p: &ModelParams) -> Result<SpectralProfile> {
    let lambda_star = p.lambda_star();
    let min = arginf_cumulant(p)?;
    let inf_psi_eta = min.inf_kappa - cumulant(p, 0.0)?;
    let regime = classify_regime(p);
    let lambda = match regime {
        Regime::T => lambda_star + inf_psi_eta,
        _ => lambda_star,
    };
    let q_star = lambda_star + inf_psi_eta.max(-p.kernel.total_mass());
    Ok(SpectralProfile {
        lambda_star,
        q0: min.q0,
        q0_at_boundary: min.at_boundary,
        inf_kappa: min.inf_kappa,
        inf_psi_eta,
        lambda,
        q_star,
        regime,
        mean_drift: p.a - p.kernel.log_moment(),
    })
}

/// Right inverse of `psi_eta`: the largest `p >= 0` with `psi_eta(p) = q`.
///
/// Defined for `q >= inf_{p >= 0} psi_eta(p)`; at the tangency value the
/// double root `q0` is returned.
pub fn right_inverse_phi(p: &ModelParams, q: f64) -> Result<f64> {
    let min = arginf_cumulant(p)?;
    let lower = min.inf_kappa - cumulant(p, 0.0)?;
    if q < lower {
        return Err(Error::OutOfDomain { value: q, lower });
    }
    largest_root_above(p, q, min.q0)
}

fn largest_root_above(p: &ModelParams, q: f64, start: f64) -> Result<f64> {
    let g = |x: f64| Ok(psi_eta(p, x)? - q);
    let ftol = 1e-13 * q.abs().max(1.0);
    // at the tangency value the double root would only be met to sqrt(ftol)
    if g(start)? >= -ftol {
        return Ok(start);
    }
    increasing_root(g, |x| cumulant_derivative(p, x, 1), start, ftol)
}

/// Infimum of `psi_eta` over its whole domain of finiteness and the point
/// where it is attained (may be negative in the recurrent regimes).
pub fn global_inf_psi_eta(p: &ModelParams) -> Result<(f64, f64)> {
    let d0 = cumulant_derivative(p, 0.0, 1)?;
    if d0 <= 0.0 {
        let min = arginf_cumulant(p)?;
        return Ok((min.q0, min.inf_kappa - cumulant(p, 0.0)?));
    }
    let threshold = p.kernel.shape.divergence_threshold();
    // Walk left until psi' turns negative or the domain ends.
    let mut lo = -1.0f64;
    if threshold.is_finite() {
        lo = lo.max(0.5 * threshold);
    }
    let mut step = 1.0;
    let mut found = false;
    for _ in 0..200 {
        if cumulant_derivative(p, lo, 1)? < 0.0 {
            found = true;
            break;
        }
        if threshold.is_finite() {
            lo = threshold + 0.5 * (lo - threshold);
            if lo - threshold < 1e-14 {
                break;
            }
        } else {
            step *= 2.0;
            lo -= step;
        }
    }
    if !found {
        return Ok((lo, psi_eta(p, lo)?));
    }
    let x = newton_bracketed(
        |x| cumulant_derivative(p, x, 1).unwrap_or(f64::NAN),
        |x| cumulant_derivative(p, x, 2).unwrap_or(f64::NAN),
        lo,
        0.0,
        ARGINF_TOL,
    );
    Ok((x, psi_eta(p, x)?))
}

/// `L_{c,c}(q) = E_c[exp(-(q - lambda*) H(c)); H(c) < inf]` in closed form:
/// `1 - a Phi(q - lambda*) / (2B + q - lambda*)`, infinite below the
/// abscissa of convergence.
///
/// The abscissa is `lambda* + max(inf psi_eta, -2B)` with the infimum taken
/// over the whole domain of `psi_eta`; for `q` at or above `lambda*` this is
/// the same as using [`right_inverse_phi`].
pub fn return_laplace_closed_form(p: &ModelParams, q: f64) -> Result<f64> {
    let lambda_star = p.lambda_star();
    let s = q - lambda_star;
    let (p_min, inf_psi) = global_inf_psi_eta(p)?;
    let total = p.kernel.total_mass();
    if s < inf_psi.max(-total) || s + total <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let phi = largest_root_above(p, s, p_min)?;
    Ok(1.0 - p.a * phi / (total + s))
}

/// `int_0^inf e^{-qt} P~(zeta > t) dt = (Phi(q + inf psi_eta) - q0) / (q Phi(q + inf psi_eta))`
/// for the lifetime `zeta` of the tilted spine (transient regime, `q > 0`).
pub fn tilted_lifetime_laplace(p: &ModelParams, q: f64) -> Result<f64> {
    let prof = leading_eigenvalue(p)?;
    if prof.regime != Regime::T {
        return Err(Error::WrongRegime { expected: "T", found: prof.regime });
    }
    if !(q > 0.0) {
        return Err(Error::OutOfDomain { value: q, lower: 0.0 });
    }
    let phi = right_inverse_phi(p, q + prof.inf_psi_eta)?;
    Ok((phi - prof.q0) / (q * phi))
}
