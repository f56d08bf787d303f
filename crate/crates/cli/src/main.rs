use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randmeas::experiments::{self, ExperimentConfig, ExperimentKind, RunOptions};
use randmeas::Error;

const EXIT_RUN: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_AUDIT: u8 = 3;

/// Randomized-measurement readout mitigation experiments.
#[derive(Parser)]
#[command(name = "randmeas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise readout correlations on |0...0> per measurement method.
    Correlations(Common),
    /// Three-wave populations: exact, direct and mitigated.
    Threewave(Common),
    /// Mitigated estimate of the configured observable.
    Estimate(Common),
    /// Oracle checks; exits with 3 if any row fails.
    Audit(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Without one, defaults are used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Report root; results go to DIR/<experiment>-<config hash>/.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
    /// Replace the config's master seed.
    #[arg(long, value_name = "SEED")]
    seed_override: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Write every shot's frame words and outcomes to shots.csv (estimate only).
    #[arg(long)]
    dump_frames: bool,
}

fn load_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let qubits = if kind == ExperimentKind::Correlations { 8 } else { 2 };
            ExperimentConfig::new(kind, qubits)
        }
    };
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config describes a {} experiment, not {}",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = common.seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io { .. } | Error::Csv(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    }
}

fn execute(kind: ExperimentKind, common: Common) -> Result<u8, Error> {
    let cfg = load_config(kind, &common)?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let opts = RunOptions {
        plots: common.plots,
        dump_frames: common.dump_frames,
    };
    let output = experiments::run(&cfg, &opts)?;
    let root = common
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let dir = experiments::emit_report(&cfg, &output, &root)?;
    for a in &output.artifacts {
        println!("{}", dir.join(&a.name).display());
    }
    if output.failures > 0 {
        eprintln!("audit: {} check(s) failed", output.failures);
        return Ok(EXIT_AUDIT);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Correlations(c) => (ExperimentKind::Correlations, c),
        Command::Threewave(c) => (ExperimentKind::Threewave, c),
        Command::Estimate(c) => (ExperimentKind::Estimate, c),
        Command::Audit(c) => (ExperimentKind::Audit, c),
    };
    match execute(kind, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
