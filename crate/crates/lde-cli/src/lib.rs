//! Command-line front end: dataset synthesis, two-stage training, image
//! enhancement, evaluation tables, gradient verification and parameter
//! accounting. `run` is the whole CLI; `main` just forwards to it.

pub mod commands;
pub mod dataset;
pub mod files;
pub mod png_io;

use clap::Parser;

/// Parse and execute; returns the process exit code. Failures print one
/// machine-parseable `error: ...` line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
