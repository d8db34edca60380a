use std::process::ExitCode;

use anyhow::Context;
use celm_harness::cli::{run, Cli};
use celm_harness::HarnessError;
use clap::{CommandFactory, Parser};

const USAGE_EXIT: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = &cli.command.args().config;
    if !config.is_file() {
        eprintln!("error: config file {} not found\n", config.display());
        eprintln!("{}", Cli::command().render_usage());
        return ExitCode::from(USAGE_EXIT);
    }
    let name = cli.command.name();
    match run(&cli.command).with_context(|| format!("{name} failed")) {
        Ok(m) => {
            println!("{name}: {} outputs, digest {}", m.outputs.len(), m.outputs_digest());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let category = e.downcast_ref::<HarnessError>().map_or("internal", HarnessError::category);
            eprintln!("error[{category}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
