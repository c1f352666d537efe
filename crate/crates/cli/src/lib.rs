//! Command-line front end for the `fofr` toolkit.

pub mod args;
pub mod commands;
pub mod csvio;
pub mod error;
pub mod manifest;

use args::{Cli, Command};
use error::CliResult;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Smooth(a) => commands::smooth::run(a),
        Command::Bootstrap(a) => commands::bootstrap::run(a),
    }
}
