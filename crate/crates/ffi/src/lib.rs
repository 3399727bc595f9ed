//! C ABI for `gfrag`.
//!
//! Objects are opaque heap handles created by `gf_*_new` and released by
//! the matching `gf_*_free`. Every fallible call returns a [`GfStatus`];
//! on failure, `gf_last_error` gives a description of the most recent error
//! on the calling thread. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gfrag::experiments::{self, ExperimentConfig};
use gfrag::measures::{build_invariant, InvariantMeasure};
use gfrag::population::{PopulationConfig, PopulationSimulator, TreeMode};
use gfrag::rng::StreamKey;
use gfrag::scale::ScaleFunction;
use gfrag::semigroup::{solve_linear, solve_nonlinear, GridConfig, SemigroupSolution};
use gfrag::spectral::{cumulant, leading_eigenvalue, psi_eta, return_laplace_closed_form, right_inverse_phi};
use gfrag::{Error, KernelShape, ModelParams, Regime, TestFunction};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidModel = 2,
    InvalidArgument = 3,
    OutOfDomain = 4,
    WrongRegime = 5,
    NotSupercritical = 6,
    NonpositiveLambda = 7,
    ToleranceNotMet = 8,
    Numerical = 9,
    Io = 10,
    Config = 11,
    Panic = 12,
    BufferTooSmall = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfKernel {
    /// Uniform law of `V` on (0, 1); the parameter is ignored.
    Uniform = 0,
    /// Binary split at `v0` and `1 - v0`; the parameter is `v0`.
    Atomic = 1,
    /// Symmetric Beta(alpha, alpha); the parameter is `alpha`.
    Beta = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfRegime {
    Transient = 0,
    NullRecurrent = 1,
    PositiveRecurrent = 2,
    ExponentiallyRecurrent = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfSpectralProfile {
    pub lambda_star: f64,
    pub q0: f64,
    pub inf_psi_eta: f64,
    pub lambda: f64,
    pub q_star: f64,
    pub mean_drift: f64,
    pub regime: GfRegime,
}

/// Opaque model handle.
pub struct GfModel {
    params: ModelParams,
}

/// Opaque scale-function handle.
pub struct GfScale {
    inner: ScaleFunction,
}

/// Opaque invariant-measure handle.
pub struct GfInvariant {
    inner: InvariantMeasure,
}

/// Opaque population-simulator handle.
pub struct GfSimulator {
    inner: PopulationSimulator,
}

/// Opaque semigroup-solution handle.
pub struct GfSolution {
    inner: SemigroupSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GfStatus {
    match e {
        Error::InvalidModel(_) => GfStatus::InvalidModel,
        Error::InvalidArgument(_) => GfStatus::InvalidArgument,
        Error::OutOfDomain { .. } => GfStatus::OutOfDomain,
        Error::WrongRegime { .. } => GfStatus::WrongRegime,
        Error::NotSupercritical { .. } => GfStatus::NotSupercritical,
        Error::NonpositiveLambda(_) => GfStatus::NonpositiveLambda,
        Error::ToleranceNotMet { .. } => GfStatus::ToleranceNotMet,
        Error::DivergentMoment { .. } | Error::ContourFailure(_) | Error::NoConvergence(_) | Error::NormViolation(_) => {
            GfStatus::Numerical
        }
        Error::Io(_) => GfStatus::Io,
        Error::Config(_) => GfStatus::Config,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), GfStatus>>(f: F) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GfStatus::Panic
        }
    }
}

trait IntoStatus<T> {
    fn st(self) -> Result<T, GfStatus>;
}

impl<T> IntoStatus<T> for gfrag::Result<T> {
    fn st(self) -> Result<T, GfStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null() -> GfStatus {
    set_error("null pointer argument".into());
    GfStatus::NullPointer
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, GfStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), GfStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, GfStatus> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string is not valid UTF-8".into());
        GfStatus::InvalidArgument
    })
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], GfStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn function(spec: &str) -> Result<TestFunction, GfStatus> {
    spec.parse::<TestFunction>().map_err(|e| {
        set_error(e.to_string());
        GfStatus::InvalidArgument
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn gf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// New model. `kernel_param` is `v0` for `Atomic`, `alpha` for `Beta`.
#[no_mangle]
pub unsafe extern "C" fn gf_model_new(
    a: f64,
    b: f64,
    k: f64,
    c: f64,
    kernel: GfKernel,
    kernel_param: f64,
    out: *mut *mut GfModel,
) -> GfStatus {
    guard(|| {
        let shape = match kernel {
            GfKernel::Uniform => KernelShape::Uniform,
            GfKernel::Atomic => KernelShape::atomic(kernel_param),
            GfKernel::Beta => KernelShape::beta(kernel_param),
        };
        let params = ModelParams::new(a, b, k, c, shape).validate().st()?;
        put(out, Box::into_raw(Box::new(GfModel { params })))
    })
}

/// New model from the JSON model-config format.
#[no_mangle]
pub unsafe extern "C" fn gf_model_from_json(json: *const c_char, out: *mut *mut GfModel) -> GfStatus {
    guard(|| {
        let params = ModelParams::from_json_str(text(json)?).st()?;
        put(out, Box::into_raw(Box::new(GfModel { params })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_model_free(model: *mut GfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gf_spectral_profile(model: *const GfModel, out: *mut GfSpectralProfile) -> GfStatus {
    guard(|| {
        let p = leading_eigenvalue(&obj(model)?.params).st()?;
        let regime = match p.regime {
            Regime::T => GfRegime::Transient,
            Regime::NR => GfRegime::NullRecurrent,
            Regime::PR => GfRegime::PositiveRecurrent,
            Regime::ER => GfRegime::ExponentiallyRecurrent,
        };
        put(
            out,
            GfSpectralProfile {
                lambda_star: p.lambda_star,
                q0: p.q0,
                inf_psi_eta: p.inf_psi_eta,
                lambda: p.lambda,
                q_star: p.q_star,
                mean_drift: p.mean_drift,
                regime,
            },
        )
    })
}

/// `kappa(q)`.
#[no_mangle]
pub unsafe extern "C" fn gf_cumulant(model: *const GfModel, q: f64, out: *mut f64) -> GfStatus {
    guard(|| put(out, cumulant(&obj(model)?.params, q).st()?))
}

/// `psi_eta(q) = kappa(q) - kappa(0)`.
#[no_mangle]
pub unsafe extern "C" fn gf_psi_eta(model: *const GfModel, q: f64, out: *mut f64) -> GfStatus {
    guard(|| put(out, psi_eta(&obj(model)?.params, q).st()?))
}

/// Right inverse `Phi(q)` of `psi_eta`.
#[no_mangle]
pub unsafe extern "C" fn gf_phi(model: *const GfModel, q: f64, out: *mut f64) -> GfStatus {
    guard(|| put(out, right_inverse_phi(&obj(model)?.params, q).st()?))
}

/// Closed-form return-time transform `L_{c,c}(q)`; `+inf` below the abscissa.
#[no_mangle]
pub unsafe extern "C" fn gf_return_laplace(model: *const GfModel, q: f64, out: *mut f64) -> GfStatus {
    guard(|| put(out, return_laplace_closed_form(&obj(model)?.params, q).st()?))
}

#[no_mangle]
pub unsafe extern "C" fn gf_scale_new(model: *const GfModel, out: *mut *mut GfScale) -> GfStatus {
    guard(|| {
        let inner = ScaleFunction::with_defaults(&obj(model)?.params).st()?;
        put(out, Box::into_raw(Box::new(GfScale { inner })))
    })
}

/// `W(x)` and, if `w_prime` is non-null, `W'(x)`.
#[no_mangle]
pub unsafe extern "C" fn gf_scale_eval(scale: *const GfScale, x: f64, w: *mut f64, w_prime: *mut f64) -> GfStatus {
    guard(|| {
        let s = &obj(scale)?.inner;
        if !(x >= 0.0) {
            set_error(format!("scale function argument {x} is negative"));
            return Err(GfStatus::OutOfDomain);
        }
        put(w, s.w(x))?;
        if !w_prime.is_null() {
            put(w_prime, s.w_prime(x))?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_scale_free(scale: *mut GfScale) {
    if !scale.is_null() {
        drop(Box::from_raw(scale));
    }
}

#[no_mangle]
pub unsafe extern "C" fn gf_invariant_new(model: *const GfModel, out: *mut *mut GfInvariant) -> GfStatus {
    guard(|| {
        let inner = build_invariant(&obj(model)?.params).st()?;
        put(out, Box::into_raw(Box::new(GfInvariant { inner })))
    })
}

/// Total mass of `m`; `+inf` in the null-recurrent regime.
#[no_mangle]
pub unsafe extern "C" fn gf_invariant_total_mass(inv: *const GfInvariant, out: *mut f64) -> GfStatus {
    guard(|| put(out, obj(inv)?.inner.total_mass()))
}

/// `<f, nu>` for a test function given by name (`identity`, `indicator:0.5`, ...).
#[no_mangle]
pub unsafe extern "C" fn gf_invariant_expectation(inv: *const GfInvariant, f: *const c_char, out: *mut f64) -> GfStatus {
    guard(|| {
        let i = obj(inv)?;
        let f = function(text(f)?)?;
        put(out, i.inner.nu_expectation(&f).st()?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_invariant_free(inv: *mut GfInvariant) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

/// Population simulator from `x0` with snapshots at `times` (increasing).
/// `max_cells == 0` keeps the default cap.
#[no_mangle]
pub unsafe extern "C" fn gf_simulator_new(
    model: *const GfModel,
    x0: f64,
    times: *const f64,
    n_times: usize,
    max_cells: usize,
    out: *mut *mut GfSimulator,
) -> GfStatus {
    guard(|| {
        let m = obj(model)?;
        let mut cfg = PopulationConfig::new(x0, slice(times, n_times)?.to_vec());
        if max_cells > 0 {
            cfg.max_cells = max_cells;
        }
        let inner = PopulationSimulator::new(&m.params, cfg, TreeMode::Full).st()?;
        put(out, Box::into_raw(Box::new(GfSimulator { inner })))
    })
}

/// Run replica `replica` of root seed `seed`. Writes the cell count and the
/// martingale `e^{-(B-k)t} N_t` at each snapshot time into `counts` and
/// `martingale` (each of length `n_times`), and whether the run hit the
/// cell cap into `truncated`. Any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn gf_simulator_run(
    sim: *const GfSimulator,
    seed: u64,
    replica: u64,
    counts: *mut u64,
    martingale: *mut f64,
    n_times: usize,
    truncated: *mut bool,
) -> GfStatus {
    guard(|| {
        let s = &obj(sim)?.inner;
        let want = s.config().snapshot_times.len();
        if n_times < want && (!counts.is_null() || !martingale.is_null()) {
            set_error(format!("output buffers hold {n_times} values, need {want}"));
            return Err(GfStatus::BufferTooSmall);
        }
        let run = s.run(StreamKey::root(seed).derive(replica));
        for (i, snap) in run.snapshots.iter().enumerate() {
            if !counts.is_null() {
                *counts.add(i) = snap.n as u64;
            }
            if !martingale.is_null() {
                *martingale.add(i) = snap.m;
            }
        }
        if !truncated.is_null() {
            *truncated = run.truncated;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_simulator_free(sim: *mut GfSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Solve the mean semigroup (or, with `nonlinear`, `u_t[f]`) for the named
/// test function at `times`, with the default grid and tolerance `tol`
/// (`tol <= 0` keeps the default).
#[no_mangle]
pub unsafe extern "C" fn gf_semigroup_solve(
    model: *const GfModel,
    f: *const c_char,
    times: *const f64,
    n_times: usize,
    nonlinear: bool,
    tol: f64,
    out: *mut *mut GfSolution,
) -> GfStatus {
    guard(|| {
        let m = obj(model)?;
        let f = function(text(f)?)?;
        let ts = slice(times, n_times)?.to_vec();
        let t_max = ts.iter().copied().fold(0.0, f64::max);
        let mut cfg = GridConfig { output_times: ts, ..GridConfig::default() };
        if tol > 0.0 {
            cfg.tolerance = tol;
        }
        let inner = if nonlinear { solve_nonlinear(&m.params, &f, t_max, &cfg) } else { solve_linear(&m.params, &f, t_max, &cfg) }
            .st()?;
        put(out, Box::into_raw(Box::new(GfSolution { inner })))
    })
}

/// Solution at output-time index `i` and mass `x` (interpolated in `ln x`).
#[no_mangle]
pub unsafe extern "C" fn gf_solution_value(sol: *const GfSolution, i: usize, x: f64, out: *mut f64) -> GfStatus {
    guard(|| {
        let s = &obj(sol)?.inner;
        if i >= s.times.len() || !(x > 0.0) {
            set_error(format!("time index {i} or mass {x} out of range"));
            return Err(GfStatus::InvalidArgument);
        }
        put(out, s.value_at(i, x))
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_solution_error_estimate(sol: *const GfSolution, out: *mut f64) -> GfStatus {
    guard(|| put(out, obj(sol)?.inner.error_estimate))
}

#[no_mangle]
pub unsafe extern "C" fn gf_solution_free(sol: *mut GfSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Run an experiment from its JSON config. On success `*out_json` holds the
/// summary record (free it with [`gf_string_free`]) and `*passed` whether
/// every check passed.
#[no_mangle]
pub unsafe extern "C" fn gf_experiment_run(config_json: *const c_char, out_json: *mut *mut c_char, passed: *mut bool) -> GfStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json_str(text(config_json)?).st()?;
        let rec = experiments::run(&cfg).st()?;
        let json = serde_json::to_string(&rec).map_err(Error::from).st()?;
        if !passed.is_null() {
            *passed = rec.passed();
        }
        put(out_json, CString::new(json).expect("JSON has no NUL").into_raw())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
