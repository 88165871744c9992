use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arena_core::experiments::{
    run, ExperimentConfig, ExperimentKind, ExperimentOutput, RunOptions,
};
use arena_core::ArenaError;
use clap::Parser;

/// Runs a forecasting-competition experiment described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "arena", version)]
struct Cli {
    /// truthfulness, selection, concentration, complexity, tightness or chain-check
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Summary CSV path; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run beyond the feasibility caps.
    #[arg(long)]
    force: bool,
    /// Also write `<out stem>.trials.csv`.
    #[arg(long)]
    emit_trials: bool,
    /// Also write `<out stem>.<series>.dat` two-column files.
    #[arg(long)]
    emit_plotdata: bool,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(err: &ArenaError) -> u8 {
    match err {
        ArenaError::Infeasible(_) => 3,
        ArenaError::Config(_)
        | ArenaError::Json(_)
        | ArenaError::Parse { .. }
        | ArenaError::Domain { .. }
        | ArenaError::DimensionMismatch { .. }
        | ArenaError::InvalidParameter(_) => 2,
        _ => 1,
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("arena");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn write(path: &Path, text: &str) -> Result<(), ArenaError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn emit(cli: &Cli, out: Option<&Path>, output: &ExperimentOutput) -> Result<(), ArenaError> {
    match out {
        Some(path) => write(path, &output.summary)?,
        None => print!("{}", output.summary),
    }
    if cli.emit_trials {
        if let (Some(path), Some(trials)) = (out, &output.trials) {
            write(&sibling(path, "trials.csv"), trials)?;
        }
    }
    if cli.emit_plotdata {
        if let Some(path) = out {
            for series in &output.plotdata {
                write(
                    &sibling(path, &format!("{}.dat", series.name)),
                    &series.to_text(),
                )?;
            }
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), ArenaError> {
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let mut config = ExperimentConfig::load(&cli.config)?;
    if config.experiment != kind {
        return Err(ArenaError::Config(format!(
            "the config describes a {} experiment, not {}",
            config.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|p| config.base_dir.join(p)));
    if out.is_none() && (cli.emit_trials || cli.emit_plotdata) {
        return Err(ArenaError::Config(
            "--emit-trials and --emit-plotdata need an output path".into(),
        ));
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ArenaError::Config(e.to_string()))?;
    }
    let options = RunOptions {
        force: cli.force,
        emit_trials: cli.emit_trials,
    };
    let output = run(&config, options)?;
    emit(cli, out.as_deref(), &output)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
