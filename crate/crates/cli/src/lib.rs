//! Batch front end for facekit: `align`, `prep`, `train`, `eval`,
//! `schedule` and `version`.
//!
//! Settings resolve in three layers: key defaults, then the JSON object given
//! by `--config`, then command-line flags. Exit codes are 0 on success, 1 on
//! usage errors and 2 on data errors.

pub mod cli;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;

pub use commands::Failure;
pub use config::{RunConfig, KEYS};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let (sub, m) = matches.subcommand().expect("subcommand required");
    if sub == "version" {
        let _ = writeln!(out, "facekit {}", env!("CARGO_PKG_VERSION"));
        return 0;
    }
    let result = cli::resolve(sub, m)
        .map_err(Failure::Usage)
        .and_then(|cfg| match sub {
            "align" => commands::align(&cfg, out),
            "prep" => commands::prep(&cfg, out),
            "train" => commands::train_cmd(&cfg, out),
            "eval" => commands::eval_cmd(&cfg, out),
            "schedule" => commands::schedule(&cfg, out),
            _ => unreachable!("clap rejects unknown subcommands"),
        });
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(
                err,
                "error: {msg}\n\n{}",
                cli::command()
                    .find_subcommand(sub)
                    .map_or_else(String::new, |c| c.clone().render_usage().to_string())
            );
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_DATA
        }
    }
}
