//! `coalflow` command line: experiment runs and the verification battery.
//!
//! The worker-pool size comes from `COALFLOW_THREADS` (default: all
//! cores); replicate results never depend on it.

// Validation writes `!(x > 0.0)` so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coalflow::error::Error;
use config::{ExperimentKind, SimulationConfig};

#[derive(Parser)]
#[command(
    name = "coalflow",
    version,
    about = "Monte Carlo experiments on coalescing/interacting Brownian flows, \
             branching excursions, atomic superprocesses and their moment duals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run one experiment and write its data files.
    Run(RunArgs),
    /// Run the verification battery (fast or full).
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// scbm | sibm | feller | excursion | scsm | sdsm | dual-check | scaling
    kind: String,
    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label count (paths) or moment order (dual-check).
    #[arg(long)]
    m: Option<usize>,
    /// Carrier speed for coalescing-motion experiments.
    #[arg(long)]
    rho: Option<f64>,
    /// Horizon / evaluation time.
    #[arg(long = "T", visible_alias = "t", allow_hyphen_values = false)]
    t: Option<f64>,
    /// Grid step.
    #[arg(long)]
    dt: Option<f64>,
    /// Replicate count.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Branching rate: const:c | bump:base,amp
    #[arg(long)]
    sigma: Option<String>,
    /// Initial measure: "(x1,m1),(x2,m2)" | uniform:lo,hi,mass | gaussian:mean,sd,mass
    #[arg(long)]
    mu: Option<String>,
    /// Interaction kernel: gauss | gauss:w | triangular:w
    #[arg(long)]
    kernel: Option<String>,
    /// Starting points, comma separated.
    #[arg(long)]
    starts: Option<String>,
    /// Scaling parameters, comma separated.
    #[arg(long)]
    thetas: Option<String>,
    /// Test functions (repeatable): gauss | sin | one | sq:scale
    #[arg(long)]
    phi: Vec<String>,
    /// Moment function for dual-check: one | gauss
    #[arg(long)]
    f: Option<String>,
    /// Excursion cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Initial mass for the feller experiment.
    #[arg(long)]
    x0: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep dead atoms in emitted measures.
    #[arg(long)]
    keep_dead: bool,
    /// Exit nonzero if any emitted check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// fast | full
    #[arg(long, default_value = "fast")]
    suite: String,
    /// Subset of criteria to run, comma separated (default: all).
    #[arg(long)]
    criteria: Option<String>,
    /// Output directory for report.jsonl.
    #[arg(long, default_value = "runs/check")]
    out: PathBuf,
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::parameter(format!("{what}: bad number '{s}'")))
        })
        .collect()
}

fn build_config(args: &RunArgs) -> Result<SimulationConfig, Error> {
    let mut cfg: SimulationConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::parameter(format!("config file: {e}")))?
        }
        None => SimulationConfig::default(),
    };
    cfg.experiment = Some(args.kind.parse::<ExperimentKind>()?);
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(rho) = args.rho {
        cfg.rho = rho;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(sigma) = &args.sigma {
        cfg.sigma = sigma.clone();
    }
    if let Some(mu) = &args.mu {
        cfg.mu = mu.clone();
    }
    if let Some(kernel) = &args.kernel {
        cfg.kernel = kernel.clone();
    }
    if let Some(starts) = &args.starts {
        cfg.starts = parse_f64_list(starts, "starts")?;
    }
    if let Some(thetas) = &args.thetas {
        cfg.thetas = parse_f64_list(thetas, "thetas")?;
    }
    if !args.phi.is_empty() {
        cfg.phi = args.phi.clone();
    }
    if let Some(f) = &args.f {
        cfg.f = f.clone();
    }
    if let Some(cutoff) = args.cutoff {
        cfg.cutoff = cutoff;
    }
    if let Some(x0) = args.x0 {
        cfg.x0 = x0;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if args.keep_dead {
        cfg.prune = false;
    }
    Ok(cfg)
}

fn init_thread_pool() {
    if let Ok(threads) = std::env::var("COALFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match build_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return ExitCode::from(2);
                }
            };
            match runner::run_experiment(&config) {
                Ok(output) => {
                    for file in &output.files {
                        println!("wrote {}", file.display());
                    }
                    let mut failed = false;
                    for report in &output.reports {
                        println!(
                            "check {}: value {:.6} threshold {:.6} -> {}",
                            report.name,
                            report.value,
                            report.threshold,
                            if report.pass { "ok" } else { "FAIL" }
                        );
                        failed |= !report.pass;
                    }
                    if args.check && failed {
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e @ Error::Parameter(_)) | Err(e @ Error::ModelViolation(_)) => {
                    eprintln!("configuration error: {e}");
                    ExitCode::from(2)
                }
                Err(Error::Numerical { message, matrix }) => {
                    eprintln!("numerical failure: {message}");
                    let diagnostic = serde_json::json!({
                        "error": message,
                        "matrix_row_major": matrix,
                        "config": config.echo(),
                    });
                    let path = config.out.join("diagnostic.json");
                    if std::fs::create_dir_all(&config.out).is_ok()
                        && std::fs::write(&path, diagnostic.to_string()).is_ok()
                    {
                        eprintln!("diagnostic written to {}", path.display());
                    }
                    ExitCode::FAILURE
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Check(args) => {
            let criteria: Option<Vec<usize>> = match &args.criteria {
                None => None,
                Some(text) => match text
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                {
                    Ok(ids) => Some(ids),
                    Err(_) => {
                        eprintln!("configuration error: bad --criteria list '{text}'");
                        return ExitCode::from(2);
                    }
                },
            };
            match runner::run_check(&args.suite, &args.out, criteria.as_deref()) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::FAILURE,
                Err(e @ Error::Parameter(_)) => {
                    eprintln!("configuration error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("check failed: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
