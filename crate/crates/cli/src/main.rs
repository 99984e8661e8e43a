mod args;
mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use config::{RunConfig, ENDPOINT_ENV};

/// Usage problems exit 1, everything that goes wrong with data or files
/// exits 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(refertriage::Error),
    Locked(PathBuf),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(refertriage::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Locked(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Locked(p) => write!(
                f,
                "output directory is in use by another run ({} exists)",
                p.display()
            ),
        }
    }
}

impl From<refertriage::Error> for CliError {
    fn from(e: refertriage::Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|v| !v.is_empty());
    let result = RunConfig::resolve(cli.command, &cli.overrides, endpoint)
        .and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("refertriage: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
