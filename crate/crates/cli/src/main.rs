mod args;
mod commands;
mod error;
mod workspace;

use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(out) => {
            let body = if cli.json {
                serde_json::to_string_pretty(&out.json).expect("JSON values serialize")
            } else {
                out.text
            };
            if !body.is_empty() {
                let mut stdout = io::stdout().lock();
                let _ = writeln!(stdout, "{body}").and_then(|_| stdout.flush());
            }
            ExitCode::from(out.status)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
