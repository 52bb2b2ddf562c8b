use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spraygate_cli::commands::{self, Command, Context};
use spraygate_cli::config::{resolve_workers, RunConfig};
use spraygate_cli::error::{CliError, CliResult};
use spraygate_cli::output::RunDir;
use spraygate_core::ExecMode;

/// Spray-robust LiDAR detection post-processing.
#[derive(Parser)]
#[command(name = "spraygate", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Generate a synthetic dataset.
    Simulate(RunArgs),
    /// Calibrate the score threshold at a target valid-point TPR.
    Calibrate(RunArgs),
    /// Remove spray points from every frame.
    Filter(RunArgs),
    /// Detect vehicles in every frame.
    Detect(RunArgs),
    /// Drop detections without radar support.
    Gate(RunArgs),
    /// Filter, detect, gate and evaluate.
    Pipeline(RunArgs),
    /// Threshold and padding ablations.
    Sweep(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML). Without it every setting takes its default.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Input manifest, overriding `input` in the configuration.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Run directory, overriding `output` in the configuration.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads [default: `workers` in the configuration, then
    /// $SPRAYGATE_WORKERS, then one per core].
    #[arg(short = 'j', long)]
    workers: Option<usize>,
}

fn execute(command: Command, args: RunArgs) -> CliResult<String> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.input.is_some() {
        cfg.input = args.input;
    }
    if args.output.is_some() {
        cfg.output = args.output;
    }
    cfg.validate()?;
    let workers = resolve_workers(args.workers, cfg.workers)?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Config("an output directory is required (--output or `output`)".into()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let mut ctx = Context {
        cfg,
        out: RunDir::create(&out)?,
        mode: ExecMode::Parallel,
    };
    pool.install(|| commands::run(command, &mut ctx))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Calibrate(a) => (Command::Calibrate, a),
        Sub::Filter(a) => (Command::Filter, a),
        Sub::Detect(a) => (Command::Detect, a),
        Sub::Gate(a) => (Command::Gate, a),
        Sub::Pipeline(a) => (Command::Pipeline, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    let result = panic::catch_unwind(AssertUnwindSafe(|| execute(command, args)))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match result {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spraygate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
