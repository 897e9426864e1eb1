//! `lmscale` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

mod args;
mod check;
mod commands;
mod config;
mod error;
mod output;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{ColorChoice, CommandFactory, FromArgMatches};

use args::{Cli, Command};
use error::{CliError, EXIT_OK, EXIT_USAGE};

fn dispatch(cli: Cli) -> error::Result<()> {
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Allocate(a) => commands::allocate(&a),
        Command::Invert(a) => commands::invert(&a),
        Command::Envelope(a) => commands::envelope(&a),
        Command::Correlate(a) => commands::correlate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Project(a) => commands::project(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Check(a) => check::run(&a),
    }
}

fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mut command = Cli::command();
    if output::no_color() {
        command = command.color(ColorChoice::Never);
    }
    let matches = command.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn run(argv: Vec<OsString>) -> i32 {
    let argv = match config::merge(argv) {
        Ok(argv) => argv,
        Err(e) => return report(&e),
    };
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{} {e}", output::paint_stderr("error:", output::RED));
    e.exit_code()
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}
