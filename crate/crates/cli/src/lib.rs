//! Command-line front end: `eval`, `minimize`, `verify`, `overlap` and
//! `hessian`. Exit status 1 is a parse or validation error, 2 infeasible
//! targets, 3 an optimizer failure, 4 a failed check.

mod cli;
mod commands;
mod json;
mod spec;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use helfrich::optimize::OptimizeError;

pub use crate::commands::{EXIT_INFEASIBLE, EXIT_OK, EXIT_OPTIMIZER, EXIT_USAGE, EXIT_VERIFY};

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<OptimizeError>() {
        Some(OptimizeError::Infeasible { .. }) => EXIT_INFEASIBLE,
        Some(
            OptimizeError::QualityCollapse { .. }
            | OptimizeError::Diverged { .. }
            | OptimizeError::DegenerateConfiguration { .. }
            | OptimizeError::Mesh(_),
        ) => EXIT_OPTIMIZER,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the subcommand with its report
/// going to `out` and diagnostics to `err`, and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match commands::run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}
