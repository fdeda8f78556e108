use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use chemowave_cli::config::{parse_config, Cli, CliCommand, Command};
use chemowave_cli::run::{error_summary, run, EXIT_CONFIG};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        CliCommand::Constants(f) => (Command::Constants, f),
        CliCommand::Wave(f) => (Command::Wave, f),
        CliCommand::Spread(f) => (Command::Spread, f),
        CliCommand::Verify(f) => (Command::Verify, f),
    };
    if let Some(n) = std::env::var("CHEMOWAVE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cfg = match parse_config(command, flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            let _ = writeln!(std::io::stdout(), "{}", error_summary(None, "config", &e.0));
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let outcome = run(&cfg);
    match serde_json::to_string_pretty(&outcome.summary) {
        Ok(s) => {
            let _ = writeln!(std::io::stdout(), "{s}");
        }
        Err(e) => eprintln!("error: {e}"),
    }
    if outcome.status != 0 {
        if let Some(m) = outcome.summary.get("message").and_then(|m| m.as_str()) {
            eprintln!("error: {m}");
        }
    }
    ExitCode::from(outcome.status as u8)
}
