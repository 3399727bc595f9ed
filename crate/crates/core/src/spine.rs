//! Exact simulation of the tagged cell `Y = exp(eta^b)`.
//!
//! The path is tracked in the log coordinate `y = ln(Y / c) <= 0`: it drifts
//! up at speed `a`, sticks at 0 (the cap), and jumps by `ln V` at the jump
//! times. No time discretization is involved.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::model::ModelParams;
use crate::rng::{replicate, StreamKey, StreamRng};
use crate::spectral::{leading_eigenvalue, return_laplace_closed_form, right_inverse_phi};
use crate::spectral::{Regime, SpectralProfile};
use crate::stats::Estimate;

/// Default deadline for return-time runs, in units of `1/a`.
pub const RETURN_DEADLINE_SCALE: f64 = 1e4;

/// Truncation exponent for the plain return-time estimator: runs are stopped
/// once `e^{-(q - lambda*) t}` falls below `e^{-RETURN_BIAS_EXPONENT}`.
pub const RETURN_BIAS_EXPONENT: f64 = 50.0;

/// Law of a (possibly tilted and killed) spine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineLaw {
    /// Jump proposals arrive at rate `2B`; a proposal with multiplier `v` is
    /// accepted with probability `v^theta`.
    pub theta: f64,
    /// Killing hazard per unit of boundary dwell time.
    pub kill_rate: f64,
}

impl SpineLaw {
    pub const PLAIN: SpineLaw = SpineLaw { theta: 0.0, kill_rate: 0.0 };

    /// The spine tilted by `(x/c)^{q0}`: jump rate `int v^{q0} rho(dv)`, and
    /// killing at rate `a q0` while at the cap.
    pub fn tilted(params: &ModelParams, q0: f64) -> Self {
        SpineLaw { theta: q0, kill_rate: params.a * q0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinePath {
    pub x0: f64,
    pub c: f64,
    pub a: f64,
    pub horizon: f64,
    /// Accepted jumps as `(time, multiplier)`.
    pub jumps: Vec<(f64, f64)>,
    /// Lebesgue time spent at the cap before the path ended.
    pub dwell: f64,
    /// Killing time; `+inf` when the path was not killed.
    pub lifetime: f64,
    /// Time at which simulation stopped (horizon, kill or return).
    pub end_time: f64,
    /// Rejected jump proposals (tilted law only).
    pub rejected: usize,
}

/// Per-replica record for output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpineSummary {
    pub final_mass: f64,
    pub dwell: f64,
    pub jumps: usize,
    pub lifetime: f64,
}

impl SpinePath {
    /// Mass at time `t <= end_time`.
    pub fn mass_at(&self, t: f64) -> f64 {
        let mut y = (self.x0 / self.c).ln();
        let mut now = 0.0;
        for &(tj, v) in &self.jumps {
            if tj > t {
                break;
            }
            y = (y + self.a * (tj - now)).min(0.0) + v.ln();
            now = tj;
        }
        self.c * (y + self.a * (t - now)).min(0.0).exp()
    }

    pub fn final_mass(&self) -> f64 {
        self.mass_at(self.end_time)
    }

    pub fn is_killed(&self) -> bool {
        self.lifetime.is_finite()
    }

    pub fn summary(&self) -> SpineSummary {
        SpineSummary { final_mass: self.final_mass(), dwell: self.dwell, jumps: self.jumps.len(), lifetime: self.lifetime }
    }

    /// `int_{t0}^{t1} f(Y_s) ds`, exact along growth arcs plus dwell times
    /// `f(c)`. The window is clipped to `[0, end_time]`.
    pub fn time_integral(&self, f: &TestFunction, t0: f64, t1: f64) -> f64 {
        let t1 = t1.min(self.end_time);
        if t1 <= t0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut y = (self.x0 / self.c).ln();
        let mut now = 0.0;
        let mut segment = |y_start: f64, s: f64, e: f64| {
            // segment starts at time s with log-mass y_start, runs to e
            let lo = s.max(t0);
            let hi = e.min(t1);
            if hi <= lo {
                return;
            }
            let y_lo = (y_start + self.a * (lo - s)).min(0.0);
            let hit = lo + (-y_lo) / self.a;
            let arc_end = hit.min(hi);
            if arc_end > lo {
                let x0 = self.c * y_lo.exp();
                let x1 = self.c * (y_lo + self.a * (arc_end - lo)).min(0.0).exp();
                total += f.arc_integral(x0, x1, self.a, self.c);
            }
            if hi > hit {
                total += (hi - hit) * f.eval(self.c, self.c);
            }
        };
        for &(tj, v) in &self.jumps {
            if now >= t1 {
                break;
            }
            segment(y, now, tj);
            y = (y + self.a * (tj - now)).min(0.0) + v.ln();
            now = tj;
        }
        if now < t1 {
            segment(y, now, t1);
        }
        total
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Stop {
    Horizon(f64),
    /// Stop at the first return to the cap after the first jump, or at the
    /// deadline.
    Return(f64),
}

struct Outcome {
    path: SpinePath,
    returned: Option<f64>,
}

fn run(params: &ModelParams, law: SpineLaw, x0: f64, stop: Stop, rng: &mut StreamRng) -> Outcome {
    let (a, c) = (params.a, params.c);
    let limit = match stop {
        Stop::Horizon(h) | Stop::Return(h) => h,
    };
    let proposal_rate = params.kernel.total_mass();
    let kill_at = rng.exp(law.kill_rate);
    let mut y = (x0 / c).ln().min(0.0);
    let mut t = 0.0;
    let mut dwell = 0.0;
    let mut jumps = Vec::new();
    let mut rejected = 0;
    let mut lifetime = f64::INFINITY;
    let mut returned = None;
    let end_time;
    loop {
        let next = t + rng.exp(proposal_rate);
        // a return run always gets its first jump away from the cap
        let limit = if matches!(stop, Stop::Return(_)) && jumps.is_empty() { f64::INFINITY } else { limit };
        let seg_end = next.min(limit);
        let hit = if y >= 0.0 { t } else { t + (-y) / a };
        if let Stop::Return(_) = stop {
            if !jumps.is_empty() && y < 0.0 && hit <= seg_end {
                returned = Some(hit);
                end_time = hit;
                break;
            }
        }
        if hit < seg_end {
            let d = seg_end - hit;
            // jump-first on ties: a kill needs strictly positive extra dwell
            if dwell + d > kill_at {
                lifetime = hit + (kill_at - dwell);
                dwell = kill_at;
                end_time = lifetime;
                break;
            }
            dwell += d;
            y = 0.0;
        } else {
            y += a * (seg_end - t);
        }
        if next >= limit {
            end_time = limit;
            break;
        }
        t = next;
        let v = params.kernel.sample(rng);
        let accept = law.theta == 0.0 || rng.open01() < v.powf(law.theta);
        if accept {
            y = y.min(0.0) + v.ln();
            jumps.push((t, v));
            if let Stop::Return(deadline) = stop {
                // return cannot happen before t + |y| / a
                if t + (-y) / a > deadline {
                    end_time = t;
                    break;
                }
            }
        } else {
            rejected += 1;
        }
    }
    let path = SpinePath { x0, c, a, horizon: limit, jumps, dwell, lifetime, end_time, rejected };
    Outcome { path, returned }
}

fn check_x0(params: &ModelParams, x0: f64) -> Result<()> {
    if x0 > 0.0 && x0 <= params.c {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("initial mass {x0} outside (0, {}]", params.c)))
    }
}

/// Plain spine from `x0` up to `horizon`.
pub fn simulate_spine(params: &ModelParams, x0: f64, horizon: f64, key: StreamKey) -> Result<SpinePath> {
    check_x0(params, x0)?;
    Ok(run(params, SpineLaw::PLAIN, x0, Stop::Horizon(horizon), &mut key.rng()).path)
}

/// Spine under an arbitrary [`SpineLaw`].
pub fn simulate_spine_with(
    params: &ModelParams,
    law: SpineLaw,
    x0: f64,
    horizon: f64,
    key: StreamKey,
) -> Result<SpinePath> {
    check_x0(params, x0)?;
    if !(law.theta >= 0.0 && law.kill_rate >= 0.0) {
        return Err(Error::InvalidArgument("tilt and kill rate must be nonnegative".into()));
    }
    Ok(run(params, law, x0, Stop::Horizon(horizon), &mut key.rng()).path)
}

/// The spine tilted by `(x/c)^{q0}` and killed at the boundary.
pub fn simulate_tilted_spine(
    params: &ModelParams,
    profile: &SpectralProfile,
    x0: f64,
    horizon: f64,
    key: StreamKey,
) -> Result<SpinePath> {
    if profile.regime != Regime::T || profile.q0 <= 0.0 {
        return Err(Error::WrongRegime { expected: "T", found: profile.regime });
    }
    simulate_spine_with(params, SpineLaw::tilted(params, profile.q0), x0, horizon, key)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSample {
    /// First return time to the cap; `None` when the run was declared
    /// non-returning at the deadline.
    pub h: Option<f64>,
    /// Time of the first jump away from the cap.
    pub first_jump: f64,
    pub path: SpinePath,
}

fn return_run(params: &ModelParams, law: SpineLaw, deadline: f64, rng: &mut StreamRng) -> ReturnSample {
    let out = run(params, law, params.c, Stop::Return(deadline), rng);
    let first_jump = out.path.jumps.first().map_or(f64::INFINITY, |j| j.0);
    ReturnSample { h: out.returned, first_jump, path: out.path }
}

/// First return time to `c` for the plain spine started at `c`, with the
/// default deadline `1e4 / a`.
pub fn first_return_time(params: &ModelParams, key: StreamKey) -> ReturnSample {
    first_return_time_with_deadline(params, RETURN_DEADLINE_SCALE / params.a, key)
}

pub fn first_return_time_with_deadline(params: &ModelParams, deadline: f64, key: StreamKey) -> ReturnSample {
    return_run(params, SpineLaw::PLAIN, deadline, &mut key.rng())
}

/// One sample of `int_0^{H(c)} f(Y_s) ds` from the cap.
pub fn excursion_functional(params: &ModelParams, f: &TestFunction, key: StreamKey) -> Result<f64> {
    let regime = crate::spectral::classify_regime(params);
    if !regime.is_recurrent() {
        return Err(Error::WrongRegime { expected: "PR, ER or NR", found: regime });
    }
    let s = return_run(params, SpineLaw::PLAIN, f64::INFINITY, &mut key.rng());
    let h = s.h.expect("recurrent spine returns");
    Ok(s.path.time_integral(f, 0.0, h))
}

/// Monte Carlo estimate of `L_{c,c}(q) = E_c[e^{-(q - lambda*) H}; H < inf]`.
///
/// For `q > lambda*` excursions are simulated under the plain law and
/// stopped once the discount is below `e^{-50}`. For `q <= lambda*` (only
/// meaningful in the transient regime) the excursion is simulated under the
/// exponential tilt `theta = Phi(q - lambda*)`, which turns the discount
/// into the weight `exp(-a theta D)` with `D` the initial dwell at the cap.
pub fn estimate_return_laplace(params: &ModelParams, q: f64, n_runs: usize, seed: u64) -> Result<Estimate> {
    let profile = leading_eigenvalue(params)?;
    if !return_laplace_closed_form(params, q)?.is_finite() || q <= profile.q_star && profile.regime == Regime::T {
        return Err(Error::OutOfDomain { value: q, lower: profile.q_star });
    }
    let s = q - profile.lambda_star;
    let samples: Vec<f64> = if s > 0.0 || (s == 0.0 && profile.regime.is_recurrent()) {
        let deadline = if s > 0.0 {
            (RETURN_BIAS_EXPONENT / s).min(RETURN_DEADLINE_SCALE / params.a)
        } else {
            RETURN_DEADLINE_SCALE / params.a
        };
        replicate(seed, n_runs, |_, key| {
            let r = return_run(params, SpineLaw::PLAIN, deadline, &mut key.rng());
            r.h.map_or(0.0, |h| (-s * h).exp())
        })
    } else {
        if s < 0.0 && profile.regime != Regime::T {
            return Err(Error::OutOfDomain { value: q, lower: profile.lambda_star });
        }
        let theta = right_inverse_phi(params, s)?;
        let law = SpineLaw { theta, kill_rate: 0.0 };
        // theta >= q0, so the tilted drift is nonnegative and the tilted
        // excursion returns almost surely: only the initial dwell matters.
        replicate(seed, n_runs, |_, key| {
            let r = return_run(params, law, 0.0, &mut key.rng());
            (-params.a * theta * r.first_jump).exp()
        })
    };
    Ok(Estimate::from_samples(&samples))
}

/// Lifetimes of `n` tilted spines from `x0`, censored at `horizon`
/// (a survivor reports `horizon`).
pub fn tilted_lifetimes(params: &ModelParams, x0: f64, horizon: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let profile = leading_eigenvalue(params)?;
    simulate_tilted_spine(params, &profile, x0, horizon, StreamKey::root(seed))?;
    Ok(replicate(seed, n, |_, key| {
        let law = SpineLaw::tilted(params, profile.q0);
        run(params, law, x0, Stop::Horizon(horizon), &mut key.rng()).path.lifetime.min(horizon)
    }))
}

/// Monte Carlo `int_0^inf e^{-qt} P~(zeta > t) dt` from the cap. Lifetimes
/// are censored at `50 / q`, which biases the estimate by at most `e^{-50}/q`.
pub fn estimate_tilted_lifetime_laplace(params: &ModelParams, q: f64, n: usize, seed: u64) -> Result<Estimate> {
    if !(q > 0.0) {
        return Err(Error::OutOfDomain { value: q, lower: 0.0 });
    }
    let horizon = RETURN_BIAS_EXPONENT / q;
    let xs: Vec<f64> = tilted_lifetimes(params, params.c, horizon, n, seed)?
        .into_iter()
        .map(|z| -(-q * z).exp_m1() / q)
        .collect();
    Ok(Estimate::from_samples(&xs))
}

/// `Y_t` at each time of `times` for `n` independent plain spines from `x0`.
/// Row `i` holds replica `i`.
pub fn spine_marginals(params: &ModelParams, x0: f64, times: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    spine_marginals_with(params, SpineLaw::PLAIN, x0, times, n, seed)
}

pub fn spine_marginals_with(
    params: &ModelParams,
    law: SpineLaw,
    x0: f64,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_x0(params, x0)?;
    let horizon = times.iter().copied().fold(0.0, f64::max);
    Ok(replicate(seed, n, |_, key| {
        let p = run(params, law, x0, Stop::Horizon(horizon), &mut key.rng()).path;
        times.iter().map(|&t| p.mass_at(t)).collect()
    }))
}

/// Many-to-one estimate of `E_x[f(Y_t)]` from `n` spines.
pub fn spine_mean(params: &ModelParams, f: &TestFunction, x0: f64, t: f64, n: usize, seed: u64) -> Result<Estimate> {
    let rows = spine_marginals(params, x0, &[t], n, seed)?;
    let vals: Vec<f64> = rows.iter().map(|r| f.eval(r[0], params.c)).collect();
    Ok(Estimate::from_samples(&vals))
}

/// Time average `(1/T) int_0^T f(Y_s) ds` over `n` independent paths.
pub fn time_average(
    params: &ModelParams,
    f: &TestFunction,
    x0: f64,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    check_x0(params, x0)?;
    let vals = replicate(seed, n, |_, key| {
        let p = run(params, SpineLaw::PLAIN, x0, Stop::Horizon(horizon), &mut key.rng()).path;
        p.time_integral(f, 0.0, horizon) / horizon
    });
    Ok(Estimate::from_samples(&vals))
}
