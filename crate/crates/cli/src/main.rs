//! `socnav`: synthetic data, graphization, training, search, evaluation,
//! scoring and heat maps from one executable.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure (I/O, divergence). Errors go to stderr as a single JSON line.

mod args;
mod commands;
mod error;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use error::{CliError, EXIT_INVALID};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprint!("{e}");
            std::process::exit(EXIT_INVALID);
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let detail = detail
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            let err = CliError::invalid("usage", message).with("detail", detail.to_string());
            eprintln!("{}", err.to_json_line());
            std::process::exit(EXIT_INVALID);
        }
    };
    if let Err(e) = commands::dispatch(cli) {
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.exit);
    }
}
