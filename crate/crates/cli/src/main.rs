mod args;
mod commands;
mod failure;
mod inputs;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::settings::Settings;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = Settings::load(cli.settings.as_deref()).and_then(|s| commands::run(cli.command, &s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            f.category.exit_code()
        }
    }
}
