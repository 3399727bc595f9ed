//! `gf`: command-line front end.
//!
//! `GF_WORKERS` sets the worker-thread count; results never depend on it.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gfrag::experiments::{self, ExperimentConfig, ExperimentKind, ResultRecord};
use gfrag::measures::build_invariant;
use gfrag::population::{PopulationConfig, PopulationSimulator, TreeMode};
use gfrag::rng::replicate;
use gfrag::scale::ScaleFunction;
use gfrag::semigroup::{solve_linear, solve_nonlinear, GridConfig};
use gfrag::skeleton::{assign_colours, skeleton_rates};
use gfrag::spectral::{cumulant, leading_eigenvalue, psi_eta};
use gfrag::spine::{simulate_spine, simulate_tilted_spine};
use gfrag::{Error, KernelShape, ModelConfig, ModelParams, TestFunction};

#[derive(Parser)]
#[command(name = "gf", version, about = "Growth-fragmentation with a mass cap: numerics and simulation")]
struct Cli {
    /// Model config (JSON) or, for slln/transient/crosscheck, an experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (default 1, or the experiment config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Comma-separated output times.
    #[arg(long, global = true, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, global = true)]
    max_cells: Option<usize>,
    /// Initial mass (defaults to the cap).
    #[arg(long, global = true)]
    x0: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SkeletonMode {
    Red,
    Blue,
    Dressed,
    Colour,
}

#[derive(Subcommand)]
enum Command {
    /// Cumulant, regime and leading eigenvalue.
    Spectral {
        /// Points of the tabulated q-grid on [0, 4].
        #[arg(long, default_value_t = 0)]
        grid: usize,
    },
    /// Scale function W and W' on a grid.
    Scale {
        #[arg(long, default_value_t = 5.0)]
        xmax: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Invariant measure summary and the density of nu.
    Invariant {
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Population Monte Carlo; one JSON line per replica.
    Simulate {
        /// Include cell masses in the output.
        #[arg(long)]
        masses: bool,
    },
    /// Tagged-cell paths; one JSON line per replica.
    Spine {
        /// Tilt by (x/c)^{q0} and kill at the boundary (transient regime).
        #[arg(long)]
        tilted: bool,
    },
    /// Red/blue skeleton processes.
    Skeleton {
        #[arg(long, value_enum)]
        mode: SkeletonMode,
    },
    /// Deterministic mean (or nonlinear) semigroup on a log grid.
    Semigroup {
        #[arg(long, default_value = "identity")]
        f: String,
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
        /// Lowest ln x on the grid.
        #[arg(long)]
        ymin: Option<f64>,
        /// Solve for u_t[f] = E prod f(X_i(t)) instead of the mean.
        #[arg(long)]
        nonlinear: bool,
        /// Largest accepted Richardson error estimate.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Strong-law experiment (ER regime; Config A by default).
    Slln,
    /// Decay experiment in the transient regime (Config B by default).
    Transient,
    /// Formula and oracle cross-checks.
    Crosscheck,
}

fn config_a() -> ModelParams {
    ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform)
}

fn config_b() -> ModelParams {
    ModelParams::new(0.3, 0.5, 0.1, 1.0, KernelShape::Uniform)
}

fn load_model(cli: &Cli, fallback: fn() -> ModelParams) -> gfrag::Result<ModelParams> {
    match &cli.config {
        Some(p) => ModelParams::from_json_file(p),
        None => Ok(fallback()),
    }
}

/// Hash of the model plus the command-level settings.
fn run_hash<T: Serialize>(model: &ModelConfig, extra: &T) -> gfrag::Result<String> {
    let bytes = serde_json::to_vec(&(model, extra))?;
    Ok(Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct RunHeader {
    command: &'static str,
    config_hash: String,
    seed: u64,
    code_version: &'static str,
    model: ModelConfig,
}

impl RunHeader {
    fn new<T: Serialize>(command: &'static str, params: &ModelParams, seed: u64, extra: &T) -> gfrag::Result<Self> {
        let model = params.to_config();
        Ok(Self { command, config_hash: run_hash(&model, extra)?, seed, code_version: experiments::CODE_VERSION, model })
    }

    fn comment(&self) -> String {
        format!(
            "# command={} config_hash={} seed={} code_version={}",
            self.command, self.config_hash, self.seed, self.code_version
        )
    }
}

fn sink(out: &Option<PathBuf>, name: &str) -> gfrag::Result<Box<dyn Write>> {
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(BufWriter::new(File::create(dir.join(name))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_csv(out: &Option<PathBuf>, name: &str, header: &RunHeader, cols: &[&str], rows: &[Vec<f64>]) -> gfrag::Result<()> {
    let mut w = sink(out, name)?;
    writeln!(w, "{}", header.comment())?;
    writeln!(w, "{}", cols.join(","))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, name: &str, value: &T) -> gfrag::Result<()> {
    let mut w = sink(out, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(out: &Option<PathBuf>, name: &str, header: &RunHeader, rows: &[T]) -> gfrag::Result<()> {
    let mut w = sink(out, name)?;
    serde_json::to_writer(&mut w, &serde_json::json!({ "header": header }))?;
    writeln!(w)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn population_config(cli: &Cli, params: &ModelParams, default_times: &[f64]) -> PopulationConfig {
    let times = cli.times.clone().unwrap_or_else(|| default_times.to_vec());
    let mut pc = PopulationConfig::new(cli.x0.unwrap_or(params.c), times);
    if let Some(m) = cli.max_cells {
        pc.max_cells = m;
    }
    pc
}

fn experiment_config(cli: &Cli, kind: ExperimentKind) -> gfrag::Result<ExperimentConfig> {
    let fallback = if kind == ExperimentKind::Transient { config_b } else { config_a };
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            if serde_json::from_str::<ModelConfig>(&text).is_ok() {
                ExperimentConfig::preset(kind, &ModelParams::from_json_str(&text)?)
            } else {
                ExperimentConfig::from_json_file(p)?
            }
        }
        None => ExperimentConfig::preset(kind, &fallback()),
    };
    if cfg.kind != kind {
        return Err(Error::InvalidArgument(format!("config is for '{}', not '{}'", cfg.kind.name(), kind.name())));
    }
    // explicit flags override the file
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(t) = &cli.times {
        cfg.times = t.clone();
    }
    if let Some(m) = cli.max_cells {
        cfg.max_cells = m;
    }
    if cli.x0.is_some() {
        cfg.x0 = cli.x0;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    Ok(cfg)
}

fn report(record: &ResultRecord) {
    for c in &record.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        eprintln!("{tag} {:<40} measured {:<14.8} reference {:<14.8} allowed {:.3e} {}", c.name, c.measured, c.reference, c.allowed, c.note);
    }
    eprintln!(
        "{} checks, {} failed, {:.1} s on {} workers",
        record.checks.len(),
        record.checks.iter().filter(|c| !c.passed).count(),
        record.runtime.seconds,
        record.runtime.workers
    );
}

fn run(cli: &Cli) -> gfrag::Result<bool> {
    let seed = cli.seed.unwrap_or(1);
    match &cli.command {
        Command::Spectral { grid } => {
            let p = load_model(cli, config_a)?;
            let prof = leading_eigenvalue(&p)?;
            let header = RunHeader::new("spectral", &p, seed, grid)?;
            write_json(&cli.out, "spectral.json", &serde_json::json!({ "header": header, "profile": prof }))?;
            if *grid > 1 {
                let rows = (0..*grid)
                    .map(|i| {
                        let q = 4.0 * i as f64 / (*grid - 1) as f64;
                        Ok(vec![q, cumulant(&p, q)?, psi_eta(&p, q)?])
                    })
                    .collect::<gfrag::Result<Vec<_>>>()?;
                write_csv(&cli.out, "spectral.csv", &header, &["q", "kappa", "psi_eta"], &rows)?;
            }
        }
        Command::Scale { xmax, points } => {
            let p = load_model(cli, config_a)?;
            let w = ScaleFunction::with_defaults(&p)?;
            let header = RunHeader::new("scale", &p, seed, &(xmax, points))?;
            let n = (*points).max(2);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let x = xmax * i as f64 / (n - 1) as f64;
                    vec![x, w.w(x), w.w_prime(x)]
                })
                .collect();
            write_csv(&cli.out, "scale.csv", &header, &["x", "W", "W_prime"], &rows)?;
        }
        Command::Invariant { points } => {
            let p = load_model(cli, config_a)?;
            let nu = build_invariant(&p)?;
            let header = RunHeader::new("invariant", &p, seed, points)?;
            write_json(&cli.out, "invariant.json", &serde_json::json!({ "header": header, "summary": nu.summary() }))?;
            let n = (*points).max(2);
            let rows: Vec<Vec<f64>> = (1..=n)
                .map(|i| {
                    let x = p.c * i as f64 / n as f64;
                    vec![x, nu.density(x), nu.nu_cdf(x)]
                })
                .collect();
            write_csv(&cli.out, "invariant.csv", &header, &["x", "m_density", "nu_cdf"], &rows)?;
        }
        Command::Simulate { masses } => {
            let p = load_model(cli, config_a)?;
            let pc = population_config(cli, &p, &[1.0, 2.0, 5.0]);
            let n = cli.replicas.unwrap_or(100);
            let header = RunHeader::new("simulate", &p, seed, &(&pc.snapshot_times, pc.x0, pc.max_cells, n))?;
            let sim = PopulationSimulator::new(&p, pc, TreeMode::Full)?;
            let mut runs = sim.run_replicas(seed, n);
            if !masses {
                for r in &mut runs {
                    for s in &mut r.snapshots {
                        s.masses.clear();
                    }
                }
            }
            write_jsonl(&cli.out, "simulate.jsonl", &header, &runs)?;
        }
        Command::Spine { tilted } => {
            let fallback = if *tilted { config_b } else { config_a };
            let p = load_model(cli, fallback)?;
            let prof = leading_eigenvalue(&p)?;
            let x0 = cli.x0.unwrap_or(p.c);
            let horizon = cli.horizon.unwrap_or(50.0);
            let n = cli.replicas.unwrap_or(1000);
            let header = RunHeader::new("spine", &p, seed, &(tilted, x0, horizon, n))?;
            let paths = replicate(seed, n, |_, k| {
                if *tilted {
                    simulate_tilted_spine(&p, &prof, x0, horizon, k)
                } else {
                    simulate_spine(&p, x0, horizon, k)
                }
                .map(|path| path.summary())
            })
            .into_iter()
            .collect::<gfrag::Result<Vec<_>>>()?;
            write_jsonl(&cli.out, "spine.jsonl", &header, &paths)?;
        }
        Command::Skeleton { mode } => {
            let p = load_model(cli, config_a)?;
            let rates = skeleton_rates(&p)?;
            let pc = population_config(cli, &p, &[1.0, 2.0, 5.0]);
            let n = cli.replicas.unwrap_or(100);
            let name = match mode {
                SkeletonMode::Red => "red",
                SkeletonMode::Blue => "blue",
                SkeletonMode::Dressed => "dressed",
                SkeletonMode::Colour => "colour",
            };
            let header = RunHeader::new("skeleton", &p, seed, &(name, &pc.snapshot_times, pc.x0, pc.max_cells, n))?;
            #[derive(Serialize)]
            struct Row {
                replica: usize,
                truncated: bool,
                t: Vec<f64>,
                n: Vec<usize>,
                #[serde(skip_serializing_if = "Vec::is_empty")]
                blue: Vec<usize>,
            }
            let tree = match mode {
                SkeletonMode::Red => TreeMode::Red,
                SkeletonMode::Blue => TreeMode::Blue { dress: false },
                SkeletonMode::Dressed => TreeMode::Blue { dress: true },
                SkeletonMode::Colour => TreeMode::Full,
            };
            let sim = PopulationSimulator::new(&p, pc, tree)?;
            let colour = matches!(mode, SkeletonMode::Colour);
            let rows = replicate(seed, n, |i, k| {
                let run = sim.run(k);
                let blue = if colour {
                    run.snapshots
                        .iter()
                        .enumerate()
                        .map(|(j, s)| assign_colours(s, rates.p, k.derive(1 + j as u64)).iter().filter(|&&b| b).count())
                        .collect()
                } else {
                    Vec::new()
                };
                Row {
                    replica: i,
                    truncated: run.truncated,
                    t: run.snapshots.iter().map(|s| s.time).collect(),
                    n: run.snapshots.iter().map(|s| s.n).collect(),
                    blue,
                }
            });
            write_json(&cli.out, "skeleton-rates.json", &serde_json::json!({ "header": header, "rates": rates }))?;
            write_jsonl(&cli.out, &format!("skeleton-{name}.jsonl"), &header, &rows)?;
        }
        Command::Semigroup { f, t_max, grid, ymin, nonlinear, tolerance } => {
            let p = load_model(cli, config_a)?;
            let func: TestFunction = f.parse()?;
            let mut cfg = GridConfig { points: *grid, tolerance: *tolerance, output_times: cli.times.clone().unwrap_or_default(), ..GridConfig::default() };
            if let Some(y) = ymin {
                cfg.y_span = p.c.ln() - y;
            }
            let sol = if *nonlinear { solve_nonlinear(&p, &func, *t_max, &cfg)? } else { solve_linear(&p, &func, *t_max, &cfg)? };
            let header = RunHeader::new("semigroup", &p, seed, &(f, t_max, grid, ymin, nonlinear, tolerance, &cfg.output_times))?;
            let xs = sol.x_grid();
            let rows: Vec<Vec<f64>> = sol
                .times
                .iter()
                .enumerate()
                .flat_map(|(i, &t)| xs.iter().zip(&sol.values[i]).map(move |(&x, &v)| vec![t, x, v]))
                .collect();
            write_csv(&cli.out, "semigroup.csv", &header, &["t", "x", "value"], &rows)?;
            eprintln!("error estimate {:.3e}, clamp weight at t_max {:.3e}", sol.error_estimate, sol.clamp_error.last().unwrap_or(&0.0));
        }
        Command::Slln | Command::Transient | Command::Crosscheck => {
            let kind = match cli.command {
                Command::Slln => ExperimentKind::Slln,
                Command::Transient => ExperimentKind::Transient,
                _ => ExperimentKind::Crosscheck,
            };
            let cfg = experiment_config(cli, kind)?;
            let record = experiments::run(&cfg)?;
            report(&record);
            match &cfg.out {
                Some(dir) => {
                    let paths = experiments::write_outputs(&record, dir)?;
                    eprintln!("wrote {}", paths.summary.display());
                }
                None => write_json(&None, "", &record)?,
            }
            return Ok(record.passed());
        }
    }
    Ok(true)
}

fn init_workers() {
    if let Some(n) = std::env::var("GF_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("gf: {e}");
            ExitCode::FAILURE
        }
    }
}
