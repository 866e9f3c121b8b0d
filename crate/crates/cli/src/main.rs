mod args;
mod commands;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use thiserror::Error;

use args::{Cli, Command};
use manifest::{RunRecorder, RunStatus};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spillover::Error),

    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn status(&self) -> RunStatus {
        match self {
            CliError::Core(e) if e.is_numerical() => RunStatus::NumericalFailure,
            _ => RunStatus::ValidationError,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

const DEFAULT_MANIFEST: &str = "manifest.json";

/// Value of `--manifest` when the command line could not be parsed.
fn manifest_flag(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--manifest=")
            .map(PathBuf::from)
            .or_else(|| (a == "--manifest").then(|| argv.get(i + 1).map(PathBuf::from)).flatten())
    })
}

fn write_manifest(manifest: &manifest::RunManifest, path: &PathBuf) {
    if let Err(e) = manifest.write(path) {
        eprintln!("warning: could not write manifest {}: {e}", path.display());
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let path = manifest_flag(&argv).unwrap_or_else(|| PathBuf::from(DEFAULT_MANIFEST));
            let subcommand = argv.get(1).cloned().unwrap_or_default();
            let manifest = RunRecorder::start().finish(
                &subcommand,
                argv,
                RunStatus::ValidationError,
                e.to_string().lines().next().map(str::to_string),
            );
            write_manifest(&manifest, &path);
            return ExitCode::from(RunStatus::ValidationError.exit_code());
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let manifest_path = cli.manifest.clone().unwrap_or_else(|| {
        cli.command
            .output_dir()
            .map(|d| d.join(DEFAULT_MANIFEST))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_MANIFEST))
    });

    let mut rec = RunRecorder::start();
    let outcome = configure_threads(cli.threads).and_then(|()| run(&cli.command, &mut rec));
    let (status, message) = match &outcome {
        Ok(()) => (RunStatus::Ok, None),
        Err(e) => {
            error!("{e}");
            (e.status(), Some(e.to_string()))
        }
    };
    let manifest = rec.finish(cli.command.name(), argv, status, message);
    write_manifest(&manifest, &manifest_path);
    ExitCode::from(status.exit_code())
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(command: &Command, rec: &mut RunRecorder) -> CliResult<()> {
    match command {
        Command::Mobility(a) => commands::mobility::run(a, rec),
        Command::Simulate(a) => commands::simulate::run(a, rec),
        Command::Fit(a) => commands::fit::run(a, rec),
        Command::Estimate(a) => commands::estimate::run(a, rec),
        Command::Bias(a) => commands::bias::run(&a.command, rec),
        Command::Experiment(a) => commands::experiment::run(a, rec),
    }
}
