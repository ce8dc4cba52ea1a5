//! `dimred` command-line front end.

pub mod cache;
pub mod config;
pub mod record;
pub mod run;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

pub use config::{Cli, CommandKind, Flags, RunConfig};
pub use record::{Payload, ResultRecord};
pub use run::{execute, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] dimred_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_FAILED: u8 = 2;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use dimred_core::Error as E;
        match self {
            CliError::Validation(_) => EXIT_INVALID,
            CliError::Core(e) => match e {
                E::OutOfRange { .. } | E::LabelOutOfRange { .. } | E::InvalidGraph(_) | E::Domain(_) | E::Potential(_) => EXIT_INVALID,
                _ => EXIT_FAILED,
            },
            CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => EXIT_FAILED,
        }
    }
}

/// Parses `args`, runs the command, prints the payload and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let (kind, flags) = cli.command.split();
    match execute(kind, flags) {
        Ok(out) => {
            print!("{}", out.rendered);
            if out.record.payload.passed() {
                EXIT_OK
            } else {
                eprintln!("dimred: {kind} check failed (z-score above threshold)");
                EXIT_FAILED
            }
        }
        Err(e) => {
            eprintln!("dimred: {e}");
            e.exit_code()
        }
    }
}
