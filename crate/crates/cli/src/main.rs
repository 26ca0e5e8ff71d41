//! `cachefx <experiment> --config <file> [overrides]`
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for runtime errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cachefx_core::experiment::{self, ExperimentConfig, ExperimentKind, Overrides};
use cachefx_core::{DesignKind, Error, ReplacementPolicy};
use clap::Parser;
use log::info;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cachefx",
    version,
    about = "Side-channel evaluation of cache designs"
)]
struct Cli {
    /// ree, evset, attack or sweep.
    experiment: ExperimentKind,

    /// JSON experiment configuration.
    #[arg(long, short)]
    config: PathBuf,

    /// Comma-separated design names; replaces the configured list.
    #[arg(long, value_delimiter = ',')]
    design: Option<Vec<DesignKind>>,

    #[arg(long, value_delimiter = ',')]
    lines: Option<Vec<usize>>,

    #[arg(long, value_delimiter = ',')]
    ways: Option<Vec<usize>>,

    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<ReplacementPolicy>>,

    #[arg(long)]
    reps: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// CSV output path. Without it (and without `output` in the config) rows go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(long, short)]
    verbose: bool,
}

fn load(cli: Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    cfg.apply(Overrides {
        experiment: Some(cli.experiment),
        design: cli.design,
        lines: cli.lines,
        ways: cli.ways,
        policy: cli.policy,
        repetitions: cli.reps,
        seed: cli.seed,
        output: cli.out,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<(), Error> {
    info!(
        "running {} over {} configurations x {} repetitions (seed {})",
        cfg.experiment.map_or("?", |k| k.name()),
        cfg.grid().len(),
        cfg.repetitions,
        cfg.seed
    );
    match &cfg.output {
        Some(path) => {
            let out = experiment::run_to_files(cfg)?;
            info!(
                "wrote {} rows to {}",
                out.rows.len() + out.aggregates.len(),
                path.display()
            );
        }
        None => {
            let out = experiment::run(cfg)?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            out.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version are not errors.
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = match load(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("cachefx: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("cachefx: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("cachefx: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
