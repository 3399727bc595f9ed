//! Deterministic solvers for the mean semigroup `Psi_t f(x) = E_x <f, Z(t)>`
//! and the non-linear semigroup `u_t[f](x) = E_x prod_u f(Z_u(t))`.
//!
//! Both solve a backward equation on a uniform grid in `y = ln x` over
//! `[ln c - span, ln c]`. Strang splitting alternates an exact transport
//! step (one grid cell per step, `dt = dy / a`, with the cap absorbing) and
//! an RK4 step of the jump/reaction terms. Jumps that land below the grid
//! read the value at the lowest node; the weight they carry is tracked as a
//! diagnostic. Each solve is repeated at half spacing and the two are
//! combined by Richardson extrapolation, which also yields the error
//! estimate checked against the tolerance.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::measures::build_invariant;
use crate::model::{KernelShape, ModelParams};
use crate::numeric::integrate_with_breaks;
use crate::spectral::{psi_eta, Regime};
use crate::stats::linear_fit;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub points: usize,
    /// `ln c - y_min`.
    pub y_span: f64,
    /// Bound on the Richardson error estimate.
    pub tolerance: f64,
    /// Quadrature nodes per continuous kernel component (non-linear solver).
    pub quad_nodes: usize,
    /// Output times; empty means `[t_max]`.
    pub output_times: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 2048, y_span: 28.0, tolerance: 1e-4, quad_nodes: 64, output_times: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupSolution {
    pub times: Vec<f64>,
    /// Nodes in `y = ln x`, increasing, last node at `ln c`.
    pub y_grid: Vec<f64>,
    /// `values[i][j]`: solution at `times[i]` and `y_grid[j]`.
    pub values: Vec<Vec<f64>>,
    pub tolerance: f64,
    /// Largest `|fine - coarse| / 3` over nodes, per output time.
    pub time_errors: Vec<f64>,
    /// Largest of `time_errors[i] / max(1, sup_j |values[i][j]|)`; this is
    /// what is held to `tolerance`.
    pub error_estimate: f64,
    /// Weight of below-grid values in the solution at `x = c`, per output time.
    pub clamp_error: Vec<f64>,
}

impl SemigroupSolution {
    pub fn x_grid(&self) -> Vec<f64> {
        self.y_grid.iter().map(|y| y.exp()).collect()
    }

    /// Linear interpolation in `y` at output time index `i`; masses below
    /// the grid read the lowest node.
    pub fn value_at(&self, i: usize, x: f64) -> f64 {
        interpolate(&self.y_grid, &self.values[i], x.ln())
    }

    /// Value at the cap for output time index `i`.
    pub fn at_cap(&self, i: usize) -> f64 {
        *self.values[i].last().expect("nonempty grid")
    }
}

fn interpolate(ys: &[f64], vals: &[f64], y: f64) -> f64 {
    let n = ys.len();
    let dy = ys[1] - ys[0];
    let s = (y - ys[0]) / dy;
    if s <= 0.0 {
        return vals[0];
    }
    if s >= (n - 1) as f64 {
        return vals[n - 1];
    }
    let j = s.floor() as usize;
    let f = s - j as f64;
    vals[j] * (1.0 - f) + vals[j + 1] * f
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Linear,
    Nonlinear,
}

#[derive(Clone, Copy)]
enum Below {
    Clamp,
    Value(f64),
}

/// Uniform grid with the top node at `ln c`.
#[derive(Debug, Clone, Copy)]
struct Grid {
    n: usize,
    dy: f64,
    y_top: f64,
}

impl Grid {
    fn y(&self, j: usize) -> f64 {
        self.y_top - (self.n - 1 - j) as f64 * self.dy
    }

    fn refine(&self) -> Grid {
        Grid { n: 2 * self.n - 1, dy: 0.5 * self.dy, y_top: self.y_top }
    }
}

/// Pick the spacing so that the discontinuities of `f` fall on nodes.
fn build_grid(c: f64, cfg: &GridConfig, f: &TestFunction) -> Result<Grid> {
    if cfg.points < 8 || !(cfg.y_span > 0.0) {
        return Err(Error::InvalidArgument("grid needs at least 8 points and a positive span".into()));
    }
    let mut dy = cfg.y_span / (cfg.points - 1) as f64;
    if let Some(&theta) = f.breakpoints(c).first() {
        let d = (c / theta).ln();
        dy = d / (d / dy).round().max(1.0);
    }
    let n = (cfg.y_span / dy).round() as usize + 1;
    Ok(Grid { n, dy, y_top: c.ln() })
}

/// Node values of `f`, with the mid value at a discontinuity.
fn sample_function(f: &TestFunction, grid: &Grid, c: f64) -> Vec<f64> {
    let breaks = f.breakpoints(c);
    (0..grid.n)
        .map(|j| {
            let x = if j + 1 == grid.n { c } else { grid.y(j).exp() };
            if breaks.iter().any(|&b| ((x / b).ln()).abs() < 1e-9 * grid.dy) {
                0.5 * (f.eval(x * (1.0 - 1e-12), c) + f.eval(x * (1.0 + 1e-12), c))
            } else {
                f.eval(x, c)
            }
        })
        .collect()
}

/// `E[g(y - J)]` for piecewise-linear `g` on the grid, `J = -ln V`, as a
/// causal convolution evaluated by FFT.
struct Convolver {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    w_hat: Vec<Complex64>,
    /// Probability that the jump from row `j` leaves the grid.
    tail: Vec<f64>,
}

impl Convolver {
    fn new(params: &ModelParams, grid: &Grid) -> Self {
        let n = grid.n;
        let dy = grid.dy;
        let shape = &params.kernel.shape;
        let f_j = |j: f64| 1.0 - shape.cdf_left((-j).exp());
        let mut jump_breaks: Vec<f64> = shape.atoms().iter().map(|a| -a.0.ln()).collect();
        jump_breaks.sort_by(f64::total_cmp);
        // cell averages of the CDF of J
        let avg: Vec<f64> = (0..n)
            .map(|m| {
                let lo = m as f64 * dy;
                let hi = lo + dy;
                let brk: Vec<f64> = jump_breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
                integrate_with_breaks(f_j, lo, hi, &brk, 1e-13, 1e-16) / dy
            })
            .collect();
        let mut w = vec![0.0; n];
        w[0] = avg[0];
        for m in 1..n {
            w[m] = avg[m] - avg[m - 1];
        }
        let tail: Vec<f64> = avg.iter().map(|a| (1.0 - a).max(0.0)).collect();
        let len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let mut w_hat: Vec<Complex64> = w.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        w_hat.resize(len, Complex64::new(0.0, 0.0));
        fft.process(&mut w_hat);
        Self { n, fft, ifft, w_hat, tail }
    }

    fn apply(&self, u: &[f64], below: Below) -> Vec<f64> {
        let len = self.w_hat.len();
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(len, Complex64::new(0.0, 0.0));
        self.fft.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.w_hat) {
            *b *= w;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / len as f64;
        let floor = match below {
            Below::Clamp => u[0],
            Below::Value(v) => v,
        };
        (0..self.n).map(|j| buf[j].re * scale + self.tail[j] * floor).collect()
    }
}

/// Discrete law of `V` for `E[g(xV) g(x(1-V))]`.
struct NodeTable {
    /// (weight, floor and fraction of ln v / dy, same for ln(1 - v))
    nodes: Vec<(f64, isize, f64, isize, f64)>,
}

impl NodeTable {
    fn new(params: &ModelParams, grid: &Grid, per_component: usize) -> Self {
        let split = |v: f64| {
            let s = v.ln() / grid.dy;
            let k = s.floor();
            (k as isize, s - k)
        };
        let nodes = params
            .kernel
            .shape
            .nodes(per_component)
            .into_iter()
            .map(|(v, w)| {
                let (k1, f1) = split(v);
                let (k2, f2) = split(1.0 - v);
                (w, k1, f1, k2, f2)
            })
            .collect();
        Self { nodes }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for &(w, k1, f1, k2, f2) in &self.nodes {
            shifted(u, k1, f1, &mut left);
            shifted(u, k2, f2, &mut right);
            for ((o, l), r) in out.iter_mut().zip(&left).zip(&right) {
                *o += w * l * r;
            }
        }
        out
    }
}

/// `dst[j] = u(y_j + (k + f) dy)` by linear interpolation, `k <= -1`,
/// reading `u[0]` below the grid.
fn shifted(u: &[f64], k: isize, f: f64, dst: &mut [f64]) {
    let n = u.len();
    let off = k.unsigned_abs();
    let cut = off.min(n);
    dst[..cut].fill(u[0]);
    for j in cut..n {
        let i = j - off;
        dst[j] = u[i] * (1.0 - f) + u[i + 1] * f;
    }
}

/// The part of the linear solution that is never smoothed by a jump,
/// `e^{-(B+k)t} f(min(x e^{at}, c))`, kept in closed form for indicator
/// functions so the grid only carries a continuous remainder.
#[derive(Clone)]
struct Singular {
    f: TestFunction,
    shape: KernelShape,
    c: f64,
}

impl Singular {
    fn for_function(params: &ModelParams, f: &TestFunction) -> Option<Self> {
        matches!(f, TestFunction::Above(_) | TestFunction::AtCap)
            .then(|| Self { f: *f, shape: params.kernel.shape.clone(), c: params.c })
    }

    /// `f(min(e^{y + s}, c))` with `s = a t`.
    fn transported(&self, y: f64, s: f64) -> f64 {
        let z = y + s;
        let x = if z >= self.c.ln() { self.c } else { z.exp() };
        self.f.eval(x, self.c)
    }

    /// `E[f(min(e^{y + s - J}, c))]`.
    fn after_jump(&self, y: f64, s: f64) -> f64 {
        let ln_c = self.c.ln();
        match self.f {
            // J < y + s - ln(theta)
            TestFunction::Above(theta) => {
                if theta >= self.c {
                    0.0
                } else {
                    let r = y + s - theta.ln();
                    if r <= 0.0 {
                        0.0
                    } else {
                        1.0 - self.shape.cdf((-r).exp())
                    }
                }
            }
            // J <= y + s - ln(c)
            TestFunction::AtCap => {
                let r = y + s - ln_c;
                if r < 0.0 {
                    0.0
                } else {
                    1.0 - self.shape.cdf_left((-r).exp())
                }
            }
            _ => 0.0,
        }
    }
}

struct Solver {
    kind: Kind,
    a: f64,
    b: f64,
    k: f64,
    grid: Grid,
    conv: Convolver,
    nodes: Option<NodeTable>,
    singular: Option<Singular>,
}

impl Solver {
    fn new(params: &ModelParams, grid: Grid, kind: Kind, quad_nodes: usize, singular: Option<Singular>) -> Self {
        let nodes = (kind == Kind::Nonlinear).then(|| NodeTable::new(params, &grid, quad_nodes));
        let conv = Convolver::new(params, &grid);
        Self { kind, a: params.a, b: params.b, k: params.k, grid, conv, nodes, singular }
    }

    fn step_len(&self) -> f64 {
        self.grid.dy / self.a
    }

    /// Right-hand side of the jump/reaction part at time `t`.
    fn reaction(&self, u: &[f64], t: f64, below: Below) -> Vec<f64> {
        let (b, k) = (self.b, self.k);
        match self.kind {
            Kind::Linear => {
                let jumps = self.conv.apply(u, below);
                let mut out: Vec<f64> = jumps.iter().zip(u).map(|(j, x)| 2.0 * b * j - (b + k) * x).collect();
                if let Some(sing) = &self.singular {
                    let scale = 2.0 * b * (-(b + k) * t).exp();
                    let s = self.a * t;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += scale * sing.after_jump(self.grid.y(j), s);
                    }
                }
                out
            }
            Kind::Nonlinear => {
                let q = self.nodes.as_ref().expect("nonlinear node table").apply(u);
                q.iter().zip(u).map(|(q, x)| k + b * q - (b + k) * x).collect()
            }
        }
    }

    /// RK4 over `[t, t + h]`.
    fn rk4(&self, u: &[f64], t: f64, h: f64, below: Below) -> Vec<f64> {
        let add = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> { x.iter().zip(d).map(|(x, d)| x + s * d).collect() };
        let k1 = self.reaction(u, t, below);
        let k2 = self.reaction(&add(u, &k1, 0.5 * h), t + 0.5 * h, below);
        let k3 = self.reaction(&add(u, &k2, 0.5 * h), t + 0.5 * h, below);
        let k4 = self.reaction(&add(u, &k3, h), t + h, below);
        (0..u.len()).map(|i| u[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }

    /// Transport by `frac` of a cell (exact when `frac == 1`).
    fn transport(u: &[f64], frac: f64) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|j| {
                if j + 1 == n {
                    u[j]
                } else if frac == 1.0 {
                    u[j + 1]
                } else {
                    u[j] * (1.0 - frac) + u[j + 1] * frac
                }
            })
            .collect()
    }

    /// Add the closed-form singular part at time `t`.
    fn assemble(&self, mut w: Vec<f64>, t: f64) -> Vec<f64> {
        if let Some(sing) = &self.singular {
            let d = (-(self.b + self.k) * t).exp();
            for (j, v) in w.iter_mut().enumerate() {
                *v += d * sing.transported(self.grid.y(j), self.a * t);
            }
        }
        w
    }

    /// Solutions at `times` (sorted, nonnegative). With a singular part,
    /// `init` is ignored and the remainder starts from zero.
    fn evolve(&self, init: &[f64], times: &[f64], below: Below) -> Vec<Vec<f64>> {
        let h = self.step_len();
        let locate = |t: f64| {
            let k = (t / h + 1e-9).floor();
            (k as usize, (t - k * h).max(0.0))
        };
        let init: Vec<f64> = if self.singular.is_some() { vec![0.0; init.len()] } else { init.to_vec() };
        let last = times.last().map_or(0, |&t| locate(t).0);
        let mut out = Vec::with_capacity(times.len());
        let mut oi = 0;
        // v holds the state transported to step k with the reaction run to
        // k h - h/2 (Strang halves merged between steps)
        let mut v = self.rk4(&init, 0.0, 0.5 * h, below);
        for step in 0..=last {
            let t_step = step as f64 * h;
            if step > 0 {
                v = Self::transport(&v, 1.0);
            }
            let mut u_step: Option<Vec<f64>> = None;
            while oi < times.len() && locate(times[oi]).0 == step {
                let r = locate(times[oi]).1;
                let u = u_step.get_or_insert_with(|| {
                    if step == 0 {
                        init.clone()
                    } else {
                        self.rk4(&v, t_step - 0.5 * h, 0.5 * h, below)
                    }
                });
                let w = if r <= 1e-12 * h {
                    u.clone()
                } else {
                    let w = self.rk4(u, t_step, 0.5 * r, below);
                    let w = Self::transport(&w, self.a * r / self.grid.dy);
                    self.rk4(&w, t_step + 0.5 * r, 0.5 * r, below)
                };
                out.push(self.assemble(w, times[oi]));
                oi += 1;
            }
            if step > 0 && step < last {
                v = self.rk4(&v, t_step - 0.5 * h, h, below);
            }
        }
        out
    }
}

fn output_times(t_max: f64, cfg: &GridConfig) -> Result<Vec<f64>> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad time horizon {t_max}")));
    }
    let mut times = if cfg.output_times.is_empty() { vec![t_max] } else { cfg.output_times.clone() };
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.iter().any(|&t| t < 0.0 || t > t_max) {
        return Err(Error::InvalidArgument("output times must lie in [0, t_max]".into()));
    }
    Ok(times)
}

fn solve(params: &ModelParams, f: &TestFunction, t_max: f64, cfg: &GridConfig, kind: Kind) -> Result<SemigroupSolution> {
    // B = 0 is allowed here: the degenerate pure-transport flow
    if !(params.a > 0.0 && params.c > 0.0 && params.b >= 0.0 && params.k >= 0.0) {
        return Err(Error::InvalidArgument("need a, c > 0 and B, k >= 0".into()));
    }
    let times = output_times(t_max, cfg)?;
    let c = params.c;
    let coarse_grid = build_grid(c, cfg, f)?;
    let fine_grid = coarse_grid.refine();
    let f0 = sample_function(f, &coarse_grid, c);
    if kind == Kind::Nonlinear {
        if let Some(bad) = f0.iter().copied().find(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::NormViolation(bad));
        }
    }
    let f1 = sample_function(f, &fine_grid, c);
    let singular = if kind == Kind::Linear { Singular::for_function(params, f) } else { None };
    let coarse = Solver::new(params, coarse_grid, kind, cfg.quad_nodes, singular.clone());
    let fine = Solver::new(params, fine_grid, kind, cfg.quad_nodes, singular);
    let cv = coarse.evolve(&f0, &times, Below::Clamp);
    let fv = fine.evolve(&f1, &times, Below::Clamp);
    let mut time_errors = Vec::with_capacity(times.len());
    let mut err: f64 = 0.0;
    let values: Vec<Vec<f64>> = cv
        .iter()
        .zip(&fv)
        .map(|(c_row, f_row)| {
            let mut row_err: f64 = 0.0;
            let row: Vec<f64> = c_row
                .iter()
                .enumerate()
                .map(|(j, &cval)| {
                    let fval = f_row[2 * j];
                    let corr = (fval - cval) / 3.0;
                    row_err = row_err.max(corr.abs());
                    fval + corr
                })
                .collect();
            let sup = row.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            err = err.max(row_err / sup);
            time_errors.push(row_err);
            row
        })
        .collect();
    // weight of below-grid values: linear flow of 0 with below-grid value 1
    let zero = vec![0.0; coarse_grid.n];
    let linear = Solver { kind: Kind::Linear, nodes: None, singular: None, ..coarse };
    let clamp_error: Vec<f64> =
        linear.evolve(&zero, &times, Below::Value(1.0)).iter().map(|z| *z.last().expect("grid")).collect();
    let y_grid = (0..coarse_grid.n).map(|j| coarse_grid.y(j)).collect();
    if !(err <= cfg.tolerance) {
        return Err(Error::ToleranceNotMet { estimate: err, tolerance: cfg.tolerance });
    }
    Ok(SemigroupSolution { times, y_grid, values, tolerance: cfg.tolerance, time_errors, error_estimate: err, clamp_error })
}

/// `Psi_t f` on the grid.
pub fn solve_linear(params: &ModelParams, f: &TestFunction, t_max: f64, cfg: &GridConfig) -> Result<SemigroupSolution> {
    solve(params, f, t_max, cfg, Kind::Linear)
}

/// `u_t[f]` on the grid, for `0 <= f <= 1`.
pub fn solve_nonlinear(
    params: &ModelParams,
    f: &TestFunction,
    t_max: f64,
    cfg: &GridConfig,
) -> Result<SemigroupSolution> {
    solve(params, f, t_max, cfg, Kind::Nonlinear)
}

/// Linear-solver evolution of arbitrary node values on the default-spacing
/// grid (no Richardson step). Used to check the semigroup property.
pub fn evolve_linear_raw(params: &ModelParams, init: &[f64], times: &[f64], cfg: &GridConfig) -> Result<Vec<Vec<f64>>> {
    let grid = build_grid(params.c, cfg, &TestFunction::One)?;
    if init.len() != grid.n {
        return Err(Error::InvalidArgument(format!("expected {} node values", grid.n)));
    }
    Ok(Solver::new(params, grid, Kind::Linear, cfg.quad_nodes, None).evolve(init, times, Below::Clamp))
}

/// Probability generating function of the linear birth-death process
/// (birth `B`, death `k`) at time `t`, from one individual.
pub fn birth_death_pgf(b: f64, k: f64, s: f64, t: f64) -> f64 {
    if (b - k).abs() < 1e-14 {
        let bt = b * t;
        return (bt + (1.0 - bt) * s) / (1.0 + bt - bt * s);
    }
    let e = ((k - b) * t).exp();
    let num = k * (s - 1.0) - e * (b * s - k);
    let den = b * (s - 1.0) - e * (b * s - k);
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsyncRow {
    pub t: f64,
    /// `e^{-lambda t} Psi_t f(x)`.
    pub scaled: f64,
    /// `scaled - <f, nu>`.
    pub deviation: f64,
    /// Solver error estimate on the same scale as `scaled`.
    pub solver_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted exponential decay rate of `|deviation|`.
    pub rate: f64,
    pub se: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsyncGrowthReport {
    pub x: f64,
    pub nu_value: f64,
    pub rows: Vec<AsyncRow>,
    pub decay: Option<DecayFit>,
    pub solver_error: f64,
}

/// Decay bound `-psi_eta(-w)` from the negative moment of order `w`.
pub fn ergodic_rate_bound(params: &ModelParams, w: f64) -> Result<f64> {
    Ok(-psi_eta(params, -w)?)
}

/// Tabulate `e^{-lambda t} Psi_t f(x)` against `<f, nu>` at `x`; in the ER
/// regime also fit the decay rate of the deviation over the rows where it
/// exceeds ten times the solver error.
pub fn asynchronous_growth_check(
    params: &ModelParams,
    f: &TestFunction,
    x: f64,
    t_grid: &[f64],
    cfg: &GridConfig,
) -> Result<AsyncGrowthReport> {
    let regime = crate::spectral::classify_regime(params);
    if !regime.is_positive_recurrent() {
        return Err(Error::WrongRegime { expected: "PR or ER", found: regime });
    }
    let nu = build_invariant(params)?;
    let nu_value = nu.nu_expectation(f)?;
    let lambda = params.lambda_star();
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let cfg = GridConfig { output_times: t_grid.to_vec(), ..cfg.clone() };
    let sol = solve_linear(params, f, t_max, &cfg)?;
    let rows: Vec<AsyncRow> = sol
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let scale = (-lambda * t).exp();
            let scaled = scale * sol.value_at(i, x);
            AsyncRow { t, scaled, deviation: scaled - nu_value, solver_error: scale * sol.time_errors[i] }
        })
        .collect();
    let decay = if regime == Regime::ER {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.deviation.abs() > 10.0 * r.solver_error.max(1e-12))
            .map(|r| (r.t, r.deviation.abs().ln()))
            .collect();
        (pts.len() >= 3).then(|| {
            let (ts, ls): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            let (slope, _, se) = linear_fit(&ts, &ls);
            DecayFit { rate: -slope, se, points: pts.len() }
        })
    } else {
        None
    };
    Ok(AsyncGrowthReport { x, nu_value, rows, decay, solver_error: sol.error_estimate })
}
