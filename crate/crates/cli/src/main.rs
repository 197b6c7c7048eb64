mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::commands::Command;
use crate::config::{CliConfig, ConfigArgs};

/// Turns structured optimization problems into solver programs with an LLM,
/// runs them in a sandbox, and benchmarks pipeline modes.
#[derive(Debug, Parser)]
#[command(name = "snopkit", version)]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = CliConfig::resolve(&cli.config, |k| std::env::var(k).ok())
        .and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
