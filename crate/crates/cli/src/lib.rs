//! The `dpage` command line: `gen-data`, `train`, `decode`, `eval` and `schema`.
//!
//! Failures print an `ERR_*` code alone on the first line of standard error,
//! then a message, and exit with 1 (I/O), 2 (usage, configuration or
//! contract) or 3 (malformed data). No environment variables are read.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};
pub use report::{validate_report, RunReport};

/// Runs one command; `args` excludes the program name.
pub fn execute(cli: &Cli, args: &[String]) -> CliResult<()> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Decode(a) => commands::decode(a),
        Command::Eval(a) => commands::eval(a, args).map(|_| ()),
        Command::Schema => {
            print!("{}", report::REPORT_SCHEMA);
            Ok(())
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprintln!("ERR_USAGE");
            eprint!("{e}");
            return 2;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.code());
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
