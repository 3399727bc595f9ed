//! Config-driven experiments: the strong law, transient decay and the
//! oracle cross-check matrix, with JSON / JSONL / CSV persistence.
//!
//! Every output carries a header with the config hash, the seed and the code
//! version. Per-replica JSONL output is a pure function of config and seed;
//! only the summary's `runtime` block depends on the machine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::measures::build_invariant;
use crate::model::{ModelConfig, ModelParams};
use crate::population::{empirical_functional, PopulationConfig, PopulationRun, PopulationSimulator, TreeMode};
use crate::rng::replicate;
use crate::scale::{laplace_inversion_oracle, ScaleFunction};
use crate::semigroup::{solve_linear, GridConfig};
use crate::skeleton::{simulate_blue_population, simulate_red_population, skeleton_rates};
use crate::spectral::{
    cumulant_derivative, leading_eigenvalue, psi_eta, return_laplace_closed_form, right_inverse_phi,
    tilted_lifetime_laplace, Regime, SpectralProfile,
};
use crate::spine::{estimate_return_laplace, estimate_tilted_lifetime_laplace, spine_marginals, tilted_lifetimes};
use crate::stats::{combined_se, ks_distance, Estimate};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Panel token standing for `(x/c)^{q0}` with the model's `q0`.
pub const POWER_Q0: &str = "power:q0";

/// Time at which the spine occupation law is compared with `nu`.
pub const OCCUPATION_TIME: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Slln,
    Transient,
    Crosscheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Slln => "slln",
            ExperimentKind::Transient => "transient",
            ExperimentKind::Crosscheck => "crosscheck",
        }
    }
}

/// Inline model or a path to a model JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(ModelConfig),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Standard errors allowed in statistical comparisons.
    pub n_se: f64,
    /// Relative band for per-replica ratios.
    pub ratio_rel: f64,
    /// Fraction of surviving replicas required inside the band.
    pub replica_fraction: f64,
    /// Bound on final / initial replica mean in the transient decay check.
    pub decay_ratio: f64,
    /// Solver tolerance, also added to gaps involving the solver.
    pub solver: f64,
    /// Bound on the KS distance between spine occupation and `nu`.
    pub ks: f64,
    /// Relative tolerance for formula-versus-numerics checks.
    pub formula_rel: f64,
}

impl Tolerances {
    pub fn standard() -> Self {
        Self {
            n_se: 3.0,
            ratio_rel: 0.05,
            replica_fraction: 0.9,
            decay_ratio: 0.25,
            solver: 1e-3,
            ks: 0.01,
            formula_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelSource,
    pub kind: ExperimentKind,
    /// Population replicas.
    pub replicas: usize,
    /// Independent spine paths for spine-based estimates.
    pub spine_runs: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Test function names (see `TestFunction`'s `FromStr`), plus `power:q0`.
    pub panel: Vec<String>,
    /// Initial mass; `None` starts at the cap.
    pub x0: Option<f64>,
    pub max_cells: usize,
    pub tolerances: Tolerances,
    /// Output directory; `None` keeps results in memory only.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The settings the `gf` subcommands use when no config file is given.
    pub fn preset(kind: ExperimentKind, model: &ModelParams) -> Self {
        let (replicas, times) = match kind {
            ExperimentKind::Slln => {
                // largest t with e^{lambda t} <= 1e4
                let t_max = if model.lambda_star() > 0.0 { (1e4f64).ln() / model.lambda_star() } else { 10.0 };
                let t_max = (t_max * 100.0).floor() / 100.0;
                (1000, vec![0.25 * t_max, 0.5 * t_max, 0.75 * t_max, t_max])
            }
            ExperimentKind::Transient => (2000, vec![2.0, 5.0, 10.0, 20.0]),
            ExperimentKind::Crosscheck => (40_000, vec![1.0, 2.0]),
        };
        let panel = match kind {
            ExperimentKind::Slln => vec!["one", "identity", "square", "indicator:half", "atcap"],
            ExperimentKind::Transient => vec![POWER_Q0, "identity"],
            ExperimentKind::Crosscheck => vec!["identity", "indicator:half"],
        };
        Self {
            schema: SCHEMA_VERSION,
            model: ModelSource::Inline(model.to_config()),
            kind,
            replicas,
            spine_runs: 100_000,
            seed: 1,
            times,
            panel: panel.into_iter().map(String::from).collect(),
            x0: None,
            max_cells: crate::population::DEFAULT_MAX_CELLS,
            tolerances: Tolerances::standard(),
            out: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        // relative model paths are taken from the config's directory
        if let (ModelSource::File(p), Some(dir)) = (&cfg.model, path.parent()) {
            if p.is_relative() {
                cfg.model = ModelSource::File(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn resolve_model(&self) -> Result<ModelParams> {
        match &self.model {
            ModelSource::Inline(m) => m.clone().into_params(),
            ModelSource::File(p) => ModelParams::from_json_file(p),
        }
    }

    /// SHA-256 of the config with the model inlined and the output path
    /// dropped, as lowercase hex.
    pub fn config_hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.model = ModelSource::Inline(self.resolve_model()?.to_config());
        canon.out = None;
        let digest = Sha256::digest(serde_json::to_vec(&canon)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Parsed panel; `power:q0` uses the model's `q0`, `indicator:half` is `1_{x > c/2}`.
    pub fn functions(&self, profile: &SpectralProfile, c: f64) -> Result<Vec<TestFunction>> {
        self.panel
            .iter()
            .map(|s| match s.as_str() {
                POWER_Q0 => Ok(TestFunction::Power(profile.q0)),
                "indicator:half" => Ok(TestFunction::Above(0.5 * c)),
                other => other.parse(),
            })
            .collect()
    }

    fn checked_times(&self) -> Result<Vec<f64>> {
        if self.times.is_empty() || self.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument("times must be nonempty, finite and nonnegative".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        Ok(self.times.clone())
    }

    fn population_config(&self, params: &ModelParams, times: Vec<f64>) -> PopulationConfig {
        let mut pc = PopulationConfig::new(self.x0.unwrap_or(params.c), times);
        pc.max_cells = self.max_cells;
        pc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: u32,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub model: ModelConfig,
    pub tolerances: Tolerances,
}

impl Header {
    fn new(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Self> {
        Ok(Self {
            schema: SCHEMA_VERSION,
            kind: cfg.kind,
            config_hash: cfg.config_hash()?,
            seed: cfg.seed,
            code_version: CODE_VERSION.to_string(),
            model: params.to_config(),
            tolerances: cfg.tolerances.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub estimate: Estimate,
    pub target: Option<f64>,
}

/// One tabulated quantity over the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<TimePoint>,
}

/// A pass/fail comparison. `passed` is `|measured - reference| <= allowed`
/// unless `note` says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub reference: f64,
    pub allowed: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn gap(name: impl Into<String>, measured: f64, reference: f64, allowed: f64) -> Self {
        let passed = (measured - reference).abs() <= allowed;
        Self { name: name.into(), measured, reference, allowed, passed, note: String::new() }
    }

    /// `measured <= bound`.
    fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            reference: bound,
            allowed: 0.0,
            passed: measured <= bound,
            note: "measured <= reference".into(),
        }
    }

    /// `measured >= bound`.
    fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            reference: bound,
            allowed: 0.0,
            passed: measured >= bound,
            note: "measured >= reference".into(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        self.note = if self.note.is_empty() { note } else { format!("{}; {note}", self.note) };
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub replicas: usize,
    /// Replicas that hit the cell cap; excluded from every estimate.
    pub truncated: usize,
    /// Untruncated replicas with no cell alive at the last time.
    pub extinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub t: f64,
    pub n: usize,
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// `<f, Z(t)>` for each panel function.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub truncated: bool,
    pub rows: Vec<ReplicaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub header: Header,
    /// Panel functions in the order used by `ReplicaRow::values`.
    pub functions: Vec<String>,
    pub counts: Counts,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub runtime: Runtime,
    /// Per-replica rows; written to JSONL, not to the summary.
    #[serde(skip)]
    pub replicas: Vec<ReplicaRecord>,
}

impl ResultRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Everything except the runtime block and with replicas included,
    /// serialized; equal across reruns with the same config and seed.
    pub fn fingerprint(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("runtime");
        }
        let reps = serde_json::to_string(&self.replicas)?;
        Ok(format!("{v}{reps}"))
    }

    fn finish(mut self, start: Instant) -> Self {
        self.runtime = Runtime { seconds: start.elapsed().as_secs_f64(), workers: rayon::current_num_threads() };
        self
    }
}

fn new_record(cfg: &ExperimentConfig, params: &ModelParams, functions: &[TestFunction]) -> Result<ResultRecord> {
    Ok(ResultRecord {
        header: Header::new(cfg, params)?,
        functions: functions.iter().map(ToString::to_string).collect(),
        counts: Counts { replicas: 0, truncated: 0, extinct: 0 },
        series: Vec::new(),
        checks: Vec::new(),
        runtime: Runtime { seconds: 0.0, workers: 0 },
        replicas: Vec::new(),
    })
}

fn replica_records(runs: &[PopulationRun], functions: &[TestFunction], c: f64) -> Vec<ReplicaRecord> {
    runs.iter()
        .enumerate()
        .map(|(i, r)| ReplicaRecord {
            replica: i,
            truncated: r.truncated,
            rows: r
                .snapshots
                .iter()
                .map(|s| ReplicaRow {
                    t: s.time,
                    n: s.n,
                    m: s.m,
                    s: s.s,
                    values: functions.iter().map(|f| empirical_functional(s, f, c)).collect(),
                })
                .collect(),
        })
        .collect()
}

fn counts(reps: &[ReplicaRecord]) -> Counts {
    Counts {
        replicas: reps.len(),
        truncated: reps.iter().filter(|r| r.truncated).count(),
        extinct: reps.iter().filter(|r| !r.truncated && r.rows.last().is_some_and(|row| row.n == 0)).count(),
    }
}

/// Estimate of `g(row)` at time index `i` over untruncated replicas for
/// which `g` returns a value.
fn column<G: Fn(&ReplicaRow) -> Option<f64>>(reps: &[ReplicaRecord], i: usize, g: G) -> Estimate {
    let xs: Vec<f64> = reps.iter().filter(|r| !r.truncated).filter_map(|r| g(&r.rows[i])).collect();
    Estimate::from_samples(&xs)
}

fn series<G: Fn(&ReplicaRow) -> Option<f64>>(
    name: String,
    reps: &[ReplicaRecord],
    times: &[f64],
    target: Option<f64>,
    g: G,
) -> Series {
    let points = times
        .iter()
        .enumerate()
        .map(|(i, &t)| TimePoint { t, estimate: column(reps, i, &g), target })
        .collect();
    Series { name, points }
}

fn bernoulli_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Strong law of large numbers in the exponentially recurrent regime.
///
/// For every surviving replica the ratio `e^{-lambda t}<f,Z(t)>/M_t`, which
/// equals `<f,Z(t)>/N_t`, is compared with `<f,nu>`; the replica mean of
/// `e^{-lambda t}<f,Z(t)>` is compared with `<f,nu>` as well (`E M_inf = 1`).
pub fn run_slln(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let params = cfg.resolve_model()?;
    let prof = leading_eigenvalue(&params)?;
    if prof.regime != Regime::ER {
        return Err(Error::WrongRegime { expected: "ER", found: prof.regime });
    }
    if params.b <= params.k {
        return Err(Error::NotSupercritical { b: params.b, k: params.k });
    }
    let functions = cfg.functions(&prof, params.c)?;
    let nu = build_invariant(&params)?;
    let targets = functions.iter().map(|f| nu.nu_expectation(f)).collect::<Result<Vec<f64>>>()?;
    let times = cfg.checked_times()?;
    let lambda = prof.lambda;
    let tol = &cfg.tolerances;

    let sim = PopulationSimulator::new(&params, cfg.population_config(&params, times.clone()), TreeMode::Full)?;
    let reps = replica_records(&sim.run_replicas(cfg.seed, cfg.replicas), &functions, params.c);
    let mut rec = new_record(cfg, &params, &functions)?;
    rec.counts = counts(&reps);
    let last = times.len() - 1;
    let t_last = times[last];

    rec.series.push(series("m".into(), &reps, &times, Some(1.0), |r| Some(r.m)));
    for (i, &t) in times.iter().enumerate() {
        let m = column(&reps, i, |r| Some(r.m));
        rec.checks.push(Check::gap(format!("martingale-mean@{t}"), m.mean, 1.0, tol.n_se * m.se));
    }
    let used = rec.counts.replicas - rec.counts.truncated;
    let ext = rec.counts.extinct as f64 / used as f64;
    let w = params.k / params.b;
    rec.checks.push(
        Check::gap("extinction", ext, w, tol.n_se * bernoulli_se(w, used))
            .with_note(format!("extinct by t = {t_last}; limit k/B")),
    );

    for (j, (f, &target)) in functions.iter().zip(&targets).enumerate() {
        let scaled = |r: &ReplicaRow, t: f64| (-lambda * t).exp() * r.values[j];
        let ratio = |r: &ReplicaRow| (r.n > 0).then(|| r.values[j] / r.n as f64);
        rec.series.push(Series {
            name: format!("scaled:{f}"),
            points: times
                .iter()
                .enumerate()
                .map(|(i, &t)| TimePoint { t, estimate: column(&reps, i, |r| Some(scaled(r, t))), target: Some(target) })
                .collect(),
        });
        rec.series.push(series(format!("ratio:{f}"), &reps, &times, Some(target), ratio));
        let band = tol.ratio_rel * target.abs();
        rec.series.push(series(format!("in-band:{f}"), &reps, &times, None, |r| {
            ratio(r).map(|x| f64::from(u8::from((x - target).abs() <= band)))
        }));

        let l1 = column(&reps, last, |r| Some(scaled(r, t_last)));
        rec.checks.push(Check::gap(format!("l1:{f}"), l1.mean, target, tol.n_se * l1.se));
        if *f == TestFunction::One {
            let worst = reps
                .iter()
                .filter(|r| !r.truncated)
                .flat_map(|r| r.rows.iter().filter_map(&ratio))
                .fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
            rec.checks.push(Check::gap("ratio-one", worst, 0.0, 1e-12));
        } else if target > 0.0 {
            let frac = column(&reps, last, |r| ratio(r).map(|x| f64::from(u8::from((x - target).abs() <= band))));
            rec.checks.push(
                Check::at_least(format!("ratio-band:{f}"), frac.mean, tol.replica_fraction)
                    .with_note(format!("fraction of {} survivors within {} of <f,nu> at t = {t_last}", frac.n, band)),
            );
        }
    }
    Ok(rec.finish(start).with_replicas(reps))
}

impl ResultRecord {
    fn with_replicas(mut self, reps: Vec<ReplicaRecord>) -> Self {
        self.replicas = reps;
        self
    }
}

/// Decay in the transient regime, driven by `f = (x/c)^{q0}`.
///
/// With this `f`, `e^{-lambda t}<f,Z(t)>` is exactly the supermartingale
/// `S_t`, whose mean is `l(x0) P~(zeta > t)` for the tilted spine's lifetime
/// `zeta`; that lifetime is simulated independently as an envelope oracle.
pub fn run_transient(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let params = cfg.resolve_model()?;
    let prof = leading_eigenvalue(&params)?;
    if prof.regime != Regime::T {
        return Err(Error::WrongRegime { expected: "T", found: prof.regime });
    }
    if !(prof.lambda > 0.0) {
        return Err(Error::NonpositiveLambda(prof.lambda));
    }
    let mut functions = cfg.functions(&prof, params.c)?;
    let ell = TestFunction::Power(prof.q0);
    if !functions.contains(&ell) {
        functions.insert(0, ell);
    }
    let j_ell = functions.iter().position(|f| *f == ell).expect("inserted");
    let times = cfg.checked_times()?;
    let lambda = prof.lambda;
    let tol = &cfg.tolerances;
    let x0 = cfg.x0.unwrap_or(params.c);
    let ell0 = ell.eval(x0, params.c);

    let sim = PopulationSimulator::new(&params, cfg.population_config(&params, times.clone()), TreeMode::Full)?;
    let reps = replica_records(&sim.run_replicas(cfg.seed, cfg.replicas), &functions, params.c);
    let mut rec = new_record(cfg, &params, &functions)?;
    rec.counts = counts(&reps);

    for (j, f) in functions.iter().enumerate() {
        rec.series.push(Series {
            name: format!("scaled:{f}"),
            points: times
                .iter()
                .enumerate()
                .map(|(i, &t)| TimePoint {
                    t,
                    estimate: column(&reps, i, |r| Some((-lambda * t).exp() * r.values[j])),
                    target: None,
                })
                .collect(),
        });
    }
    rec.series.push(series("s".into(), &reps, &times, None, |r| r.s));
    let small = 0.01 * ell0;
    rec.series.push(series("small-fraction".into(), &reps, &times, None, |r| Some(f64::from(u8::from(r.s.unwrap_or(0.0) < small)))));

    // envelope: E S_t = l(x0) P~(zeta > t)
    let horizon = *times.last().expect("nonempty");
    let lifetimes = tilted_lifetimes(&params, x0, horizon + 1.0, cfg.spine_runs, cfg.seed.wrapping_add(1))?;
    let envelope: Vec<Estimate> = times
        .iter()
        .map(|&t| {
            let alive: Vec<f64> = lifetimes.iter().map(|&z| ell0 * f64::from(u8::from(z > t))).collect();
            Estimate::from_samples(&alive)
        })
        .collect();
    rec.series.push(Series {
        name: "tilted-survival".into(),
        points: times.iter().zip(&envelope).map(|(&t, e)| TimePoint { t, estimate: *e, target: None }).collect(),
    });

    let means: Vec<Estimate> = (0..times.len())
        .map(|i| column(&reps, i, |r| Some((-lambda * times[i]).exp() * r.values[j_ell])))
        .collect();
    let decreasing = means.windows(2).all(|w| w[1].mean < w[0].mean);
    rec.checks.push(Check {
        name: "decreasing".into(),
        measured: f64::from(u8::from(decreasing)),
        reference: 1.0,
        allowed: 0.0,
        passed: decreasing,
        note: format!("replica means of e^(-lambda t)<{ell},Z(t)> strictly decrease over the grid"),
    });
    let first = means[0].mean;
    let last = means[means.len() - 1].mean;
    rec.checks.push(
        Check::at_most("decay-ratio", last / first, tol.decay_ratio)
            .with_note(format!("final / initial replica mean, t = {} vs t = {}", horizon, times[0])),
    );
    let s_means: Vec<Estimate> = (0..times.len()).map(|i| column(&reps, i, |r| r.s)).collect();
    for (i, w) in s_means.windows(2).enumerate() {
        rec.checks.push(Check::at_most(
            format!("supermartingale@{}", times[i + 1]),
            w[1].mean - w[0].mean,
            tol.n_se * combined_se(&w[0], &w[1]),
        ));
    }
    rec.checks.push(
        Check::at_most("supermartingale-half", s_means[s_means.len() - 1].mean, 0.5 * ell0)
            .with_note(format!("mean S at t = {horizon} against half its value at t = 0")),
    );
    for (i, (m, e)) in s_means.iter().zip(&envelope).enumerate() {
        rec.checks.push(Check::gap(format!("envelope@{}", times[i]), m.mean, e.mean, tol.n_se * combined_se(m, e)));
    }
    let fractions: Vec<f64> = (0..times.len())
        .map(|i| column(&reps, i, |r| Some(f64::from(u8::from(r.s.unwrap_or(0.0) < small)))).mean)
        .collect();
    let monotone = fractions.windows(2).all(|w| w[1] >= w[0]);
    rec.checks.push(Check {
        name: "small-fraction-monotone".into(),
        measured: *fractions.last().expect("nonempty"),
        reference: fractions[0],
        allowed: 0.0,
        passed: monotone,
        note: "fraction of replicas with S_t < 0.01 S_0 is nondecreasing".into(),
    });

    let q = 1.0;
    let lt = estimate_tilted_lifetime_laplace(&params, q, cfg.spine_runs, cfg.seed.wrapping_add(2))?;
    let exact = tilted_lifetime_laplace(&params, q)?;
    let phi = right_inverse_phi(&params, q + prof.inf_psi_eta)?;
    let alternative = q / (phi * (phi - prof.q0));
    rec.checks.push(
        Check::gap("lifetime-laplace", lt.mean, exact, tol.n_se * lt.se)
            .with_note(format!("se {:.3e}; the form q/(Phi(Phi-q0)) gives {alternative:.6}", lt.se)),
    );
    Ok(rec.finish(start).with_replicas(reps))
}

/// The oracle matrix: spectral closed forms, scale function, invariant
/// measure, return-time transform, many-to-one three-way agreement,
/// skeleton identities and the extinction probability.
pub fn run_crosschecks(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let params = cfg.resolve_model()?;
    let prof = leading_eigenvalue(&params)?;
    let functions = cfg.functions(&prof, params.c)?;
    let times = cfg.checked_times()?;
    let tol = cfg.tolerances.clone();
    let mut rec = new_record(cfg, &params, &functions)?;
    let c = params.c;
    let x0 = cfg.x0.unwrap_or(c);
    let lambda_star = prof.lambda_star;

    // spectral
    for q in [0.5, 1.0, 2.0] {
        let closed = params.kernel.mellin(q)?;
        let quad = params.kernel.mellin_quadrature(q)?;
        rec.checks.push(Check::gap(format!("mellin@{q}"), quad, closed, tol.formula_rel * closed.abs()));
    }
    for q in [prof.inf_psi_eta + 0.1, 0.5, 2.0] {
        let phi = right_inverse_phi(&params, q)?;
        let back = psi_eta(&params, phi)?;
        rec.checks.push(Check::gap(format!("phi-inverse@{q:.4}"), back, q, 1e-12 * q.abs().max(1.0)));
    }
    if !prof.q0_at_boundary {
        let d = cumulant_derivative(&params, prof.q0, 1)?;
        rec.checks.push(Check::gap("q0-stationary", d, 0.0, 1e-10));
    }

    // scale function
    let scale = ScaleFunction::with_defaults(&params)?;
    for beta in [1.0, 2.0, 5.0] {
        let psi = psi_eta(&params, beta)?;
        if psi > 0.0 {
            let lt = scale.laplace_transform(beta)?;
            rec.checks.push(Check::gap(format!("scale-laplace@{beta}"), lt * psi, 1.0, tol.formula_rel));
        }
    }
    if params.kernel.shape.atoms().is_empty() {
        let worst = (0..=9)
            .map(|i| {
                let x = 0.1 * (50.0f64).powf(i as f64 / 9.0);
                laplace_inversion_oracle(&params, x).map(|inv| ((scale.w(x) - inv) / inv).abs())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rec.checks.push(Check::at_most("scale-inversion", worst, tol.formula_rel).with_note("max relative gap on [0.1, 5]"));
    }

    // invariant measure and return times
    if prof.regime.is_positive_recurrent() {
        let nu = build_invariant(&params)?;
        let psi_prime = prof.mean_drift;
        rec.checks.push(Check::gap("nu-total-mass", nu.total_mass(), 1.0 / psi_prime, tol.formula_rel / psi_prime));
        let ys: Vec<f64> = spine_marginals(&params, c, &[OCCUPATION_TIME], cfg.spine_runs, cfg.seed.wrapping_add(10))?
            .into_iter()
            .map(|r| r[0])
            .collect();
        let d = ks_distance(&ys, |x| nu.nu_cdf(x), |x| nu.nu_cdf_left(x));
        rec.checks.push(Check::at_most("nu-ks", d, tol.ks).with_note(format!("t = {OCCUPATION_TIME}")));
    }
    let q_ret = lambda_star + 0.1;
    if return_laplace_closed_form(&params, q_ret)?.is_finite() && q_ret > prof.q_star {
        let closed = return_laplace_closed_form(&params, q_ret)?;
        let mc = estimate_return_laplace(&params, q_ret, cfg.spine_runs, cfg.seed.wrapping_add(11))?;
        rec.checks.push(Check::gap("return-laplace", mc.mean, closed, tol.n_se * mc.se).with_note(format!("q = {q_ret}")));
    }

    // many-to-one: population / spine / solver
    let sim = PopulationSimulator::new(&params, cfg.population_config(&params, times.clone()), TreeMode::Full)?;
    let reps = replica_records(&sim.run_replicas(cfg.seed, cfg.replicas), &functions, c);
    rec.counts = counts(&reps);
    let rows = spine_marginals(&params, x0, &times, cfg.spine_runs, cfg.seed.wrapping_add(12))?;
    let t_max = *times.last().expect("nonempty");
    let grid = GridConfig { output_times: times.clone(), tolerance: tol.solver, ..GridConfig::default() };
    for (j, f) in functions.iter().enumerate() {
        let sol = solve_linear(&params, f, t_max, &grid)?;
        let mut pop_s = Vec::new();
        let mut spine_s = Vec::new();
        let mut solver_s = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            let pop = column(&reps, i, |r| Some(r.values[j]));
            let vals: Vec<f64> = rows.iter().map(|r| f.eval(r[i], c)).collect();
            let spine = Estimate::from_samples(&vals).scaled((lambda_star * t).exp());
            let det = sol.value_at(i, x0);
            let extra = tol.solver;
            rec.checks.push(Check::gap(format!("m2o:{f}@{t}:pop-spine"), pop.mean, spine.mean, tol.n_se * combined_se(&pop, &spine)));
            rec.checks.push(Check::gap(format!("m2o:{f}@{t}:pop-solver"), pop.mean, det, tol.n_se * pop.se + extra));
            rec.checks.push(Check::gap(format!("m2o:{f}@{t}:spine-solver"), spine.mean, det, tol.n_se * spine.se + extra));
            pop_s.push(TimePoint { t, estimate: pop, target: Some(det) });
            spine_s.push(TimePoint { t, estimate: spine, target: Some(det) });
            solver_s.push(TimePoint { t, estimate: Estimate { mean: det, se: sol.time_errors[i], n: 0 }, target: None });
        }
        rec.series.push(Series { name: format!("population:{f}"), points: pop_s });
        rec.series.push(Series { name: format!("spine:{f}"), points: spine_s });
        rec.series.push(Series { name: format!("solver:{f}"), points: solver_s });
    }

    // skeleton and extinction
    if params.b > params.k {
        let rates = skeleton_rates(&params)?;
        let pc = cfg.population_config(&params, times.clone());
        let n = cfg.replicas;
        rec.checks.push(Check::gap("skeleton-rates", params.b * (rates.p + 2.0 * rates.w), params.b + params.k, 1e-12));
        let blue = replica_records(
            &replicate(cfg.seed.wrapping_add(20), n, |_, k| simulate_blue_population(&params, pc.clone(), k, false)).into_iter().collect::<Result<Vec<_>>>()?,
            &functions,
            c,
        );
        let dressed = replica_records(
            &replicate(cfg.seed.wrapping_add(21), n, |_, k| simulate_blue_population(&params, pc.clone(), k, true)).into_iter().collect::<Result<Vec<_>>>()?,
            &functions,
            c,
        );
        let red = replica_records(
            &replicate(cfg.seed.wrapping_add(22), n, |_, k| simulate_red_population(&params, pc.clone(), k)).into_iter().collect::<Result<Vec<_>>>()?,
            &functions,
            c,
        );
        let i = times.len() - 1;
        for (j, f) in functions.iter().enumerate() {
            let full = column(&reps, i, |r| Some(r.values[j]));
            let b = column(&blue, i, |r| Some(r.values[j]));
            let d = column(&dressed, i, |r| Some(r.values[j]));
            let r = column(&red, i, |r| Some(r.values[j]));
            rec.checks.push(Check::gap(format!("skeleton-blue:{f}"), b.mean, full.mean, tol.n_se * combined_se(&b, &full)));
            let mix = Estimate {
                mean: rates.p * d.mean + rates.w * r.mean,
                se: (rates.p.powi(2) * d.se.powi(2) + rates.w.powi(2) * r.se.powi(2)).sqrt(),
                n,
            };
            rec.checks.push(Check::gap(format!("skeleton-mix:{f}"), mix.mean, full.mean, tol.n_se * combined_se(&mix, &full)));
        }
        let red_n = column(&red, i, |r| Some(r.n as f64));
        rec.checks.push(Check::gap("red-decay", red_n.mean, (-lambda_star * t_max).exp(), tol.n_se * red_n.se));

        let horizon = (12.0 / lambda_star).max(60.0);
        let ext_sim = PopulationSimulator::new(&params, cfg.population_config(&params, vec![horizon]), TreeMode::Full)?;
        let ext: Vec<f64> = replicate(cfg.seed.wrapping_add(23), n, |_, k| f64::from(u8::from(ext_sim.extinct(k))));
        let e = Estimate::from_samples(&ext);
        let w = rates.w;
        rec.checks.push(
            Check::gap("extinction", e.mean, w, tol.n_se * bernoulli_se(w, n)).with_note(format!("by t = {horizon}")),
        );
    }
    Ok(rec.finish(start).with_replicas(reps))
}

/// Dispatch on `cfg.kind`.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    match cfg.kind {
        ExperimentKind::Slln => run_slln(cfg),
        ExperimentKind::Transient => run_transient(cfg),
        ExperimentKind::Crosscheck => run_crosschecks(cfg),
    }
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub summary: PathBuf,
    pub replicas: PathBuf,
    pub series: PathBuf,
}

/// Write `<kind>.json` (summary), `<kind>.jsonl` (header line, then one line
/// per replica) and `<kind>.csv` (series) into `dir`.
pub fn write_outputs(record: &ResultRecord, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir)?;
    let name = record.header.kind.name();
    let paths = OutputPaths {
        summary: dir.join(format!("{name}.json")),
        replicas: dir.join(format!("{name}.jsonl")),
        series: dir.join(format!("{name}.csv")),
    };

    let mut w = BufWriter::new(File::create(&paths.summary)?);
    serde_json::to_writer_pretty(&mut w, record)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(&paths.replicas)?);
    serde_json::to_writer(&mut w, &serde_json::json!({ "header": record.header, "functions": record.functions }))?;
    writeln!(w)?;
    for r in &record.replicas {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;

    let mut file = BufWriter::new(File::create(&paths.series)?);
    write_csv_header(&mut file, &record.header)?;
    let mut csv = csv::Writer::from_writer(file);
    csv.write_record(["series", "t", "mean", "se", "n", "target"]).map_err(csv_err)?;
    for s in &record.series {
        for p in &s.points {
            csv.write_record([
                s.name.clone(),
                p.t.to_string(),
                p.estimate.mean.to_string(),
                p.estimate.se.to_string(),
                p.estimate.n.to_string(),
                p.target.map_or(String::new(), |x| x.to_string()),
            ])
            .map_err(csv_err)?;
        }
    }
    csv.flush()?;
    Ok(paths)
}

/// `# key=value` comment line carried by every CSV the crate writes.
pub fn write_csv_header<W: Write>(w: &mut W, header: &Header) -> Result<()> {
    writeln!(
        w,
        "# kind={} config_hash={} seed={} code_version={} schema={}",
        header.kind.name(),
        header.config_hash,
        header.seed,
        header.code_version,
        header.schema
    )?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;

    fn config_a() -> ModelParams {
        ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform)
    }

    #[test]
    fn config_round_trips_and_hash_ignores_out() {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Slln, &config_a());
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(back.config_hash().unwrap(), cfg.config_hash().unwrap());
        let h = cfg.config_hash().unwrap();
        cfg.out = Some("elsewhere".into());
        assert_eq!(cfg.config_hash().unwrap(), h);
        cfg.seed += 1;
        assert_ne!(cfg.config_hash().unwrap(), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn unknown_fields_and_schema_are_rejected() {
        let cfg = ExperimentConfig::preset(ExperimentKind::Slln, &config_a());
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["schema"] = 99.into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["surprise"] = 1.into();
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn panel_tokens() {
        let p = config_a();
        let prof = leading_eigenvalue(&p).unwrap();
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Transient, &p);
        cfg.panel = vec![POWER_Q0.into(), "indicator:half".into(), "square".into()];
        let fs = cfg.functions(&prof, 1.0).unwrap();
        assert_eq!(fs, vec![TestFunction::Power(prof.q0), TestFunction::Above(0.5), TestFunction::Square]);
        cfg.panel = vec!["nonsense".into()];
        assert!(cfg.functions(&prof, 1.0).is_err());
    }

    #[test]
    fn regimes_are_enforced() {
        let b = ModelParams::new(0.3, 0.5, 0.1, 1.0, KernelShape::Uniform);
        let cfg = ExperimentConfig::preset(ExperimentKind::Slln, &b);
        assert!(matches!(run_slln(&cfg), Err(Error::WrongRegime { .. })));
        let cfg = ExperimentConfig::preset(ExperimentKind::Transient, &config_a());
        assert!(matches!(run_transient(&cfg), Err(Error::WrongRegime { .. })));
    }
}
