//! `netbeam`: calibration, simulation sweeps and verification suites for the
//! threshold-feedback multi-cell beamforming scheduler.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netbeam::experiments::{
    figures, run_calibration_sweep, run_sweep, run_verify, write_calibration_csv, write_metadata,
    write_results_csv, ConfigFile, Fault, Overrides, RunOptions, SweepSpec, VerifyOptions,
};
use netbeam::Error;

#[derive(Parser)]
#[command(name = "netbeam", version, about = "Multi-cell random-beamforming scheduler simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalization factors across the sweep points; writes K,beta,rho_dB rows.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Calibration samples per (n, k, r); overrides the config.
        #[arg(long)]
        samples: Option<usize>,
        /// Directory of cached normalization-factor tables.
        #[arg(long)]
        beta_cache: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a simulation sweep; one CSV row per sweep point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        beta_cache: Option<PathBuf>,
        /// JSON-lines file with one record per round.
        #[arg(long)]
        outcome_log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs the property suites; exits 1 if any check fails.
    Verify {
        /// Only `network.seed` is read from it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON report path (printed to stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Negative control, e.g. `swap-cdf`.
        #[arg(long)]
        inject_fault: Option<Fault>,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduces all four figures into a directory.
    SweepFigs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        beta_cache: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Checks(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<ConfigFile, Failure> {
    ConfigFile::from_path(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e.to_string()),
        other => other.into(),
    })
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::Config("field `--workers`: must be >= 1".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Failure::Runtime(e.to_string()))
}

fn calibrate(
    config: &Path,
    out: &Path,
    samples: Option<usize>,
    beta_cache: Option<&Path>,
    common: &Common,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if samples.is_some() {
        cfg.calibration.samples = samples;
    }
    let spec = SweepSpec::from_config(
        &cfg,
        Overrides {
            trials: None,
            seed: common.seed,
        },
    )?;
    let rows = pool(common.workers)?.install(|| run_calibration_sweep(&spec, beta_cache))?;
    write_calibration_csv(out, &rows)?;
    write_metadata(out, "calibrate", &spec, &rows)?;
    for r in rows.iter().filter(|r| r.beta_min < 1.0) {
        eprintln!(
            "warning: K={} rho_dB={}: min beta {:.4} < 1, outside the single-beam regime",
            r.point.k, r.point.rho_db, r.beta_min
        );
    }
    Ok(())
}

fn simulate(
    config: &Path,
    out: &Path,
    trials: Option<usize>,
    beta_cache: Option<PathBuf>,
    outcome_log: Option<&Path>,
    common: &Common,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let spec = SweepSpec::from_config(
        &cfg,
        Overrides {
            trials,
            seed: common.seed,
        },
    )?;
    let mut log = match outcome_log {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut opts = RunOptions {
        beta_cache,
        outcome_log: log.as_mut().map(|w| w as &mut (dyn Write + Send)),
        analysis_samples: 0,
    };
    let results = pool(common.workers)?.install(|| run_sweep(&spec, &mut opts))?;
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    write_results_csv(out, &results)?;
    write_metadata(out, "simulate", &spec, &results)?;
    for r in results.iter().filter(|r| r.outside_regime) {
        eprintln!(
            "warning: K={} M={} Q={}: min beta {:.4} < 1, outside the single-beam regime",
            r.point.k, r.point.m, r.point.q, r.min_beta
        );
    }
    Ok(())
}

fn verify(
    config: Option<&Path>,
    out: Option<&Path>,
    fault: Option<Fault>,
    common: &Common,
) -> Result<(), Failure> {
    let seed = match (common.seed, config) {
        (Some(s), _) => s,
        (None, Some(p)) => load_config(p)?.network.seed,
        (None, None) => 1,
    };
    let report = pool(common.workers)?.install(|| run_verify(&VerifyOptions { seed, fault }))?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    for c in &report.checks {
        eprintln!(
            "{} {}: statistic {:.6} threshold {} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.statistic,
            c.threshold,
            c.detail
        );
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure::Checks(format!("failed checks: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Calibrate {
            config,
            out,
            samples,
            beta_cache,
            common,
        } => calibrate(&config, &out, samples, beta_cache.as_deref(), &common),
        Command::Simulate {
            config,
            out,
            trials,
            beta_cache,
            outcome_log,
            common,
        } => simulate(&config, &out, trials, beta_cache, outcome_log.as_deref(), &common),
        Command::Verify {
            config,
            out,
            inject_fault,
            common,
        } => verify(config.as_deref(), out.as_deref(), inject_fault, &common),
        Command::SweepFigs {
            out,
            trials,
            beta_cache,
            common,
        } => {
            let ov = Overrides {
                trials,
                seed: common.seed,
            };
            let written =
                pool(common.workers)?.install(|| figures::run_figures(&out, ov, beta_cache))?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Checks(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
