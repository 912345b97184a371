//! Command-line front end for `corrdyn`.

pub mod args;
pub mod commands;
pub mod error;
pub mod render;
pub mod report;

use std::ffi::OsString;
use std::fs;

use clap::Parser;
use serde_json::Value;

use args::Cli;
use error::{CliError, CliResult};
use report::{error_report, RunContext};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CORRDYN_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // a pool may already exist when called twice in one process (tests)
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

/// Parses `argv`, runs the command, prints the JSON report and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command = cli.command.clone();
    let mut config = serde_json::Map::new();
    let outcome = (|| -> CliResult<Value> {
        configure_threads()?;
        let cmd = commands::lookup(&command).ok_or_else(|| {
            let names: Vec<_> = commands::registry().iter().map(|c| c.name()).collect();
            CliError::Config(format!("unknown command {command:?}; expected one of {names:?}"))
        })?;
        let mut ctx = RunContext::new(cli.common.out.clone())?;
        let res = cmd.run(&cli.common, &mut ctx);
        config = ctx.config_map().clone();
        let results = res?;
        let out = ctx.out_dir().map(|d| d.join("report.json"));
        let report = ctx.finish(&command, results);
        if let Some(path) = out {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        }
        Ok(report)
    })();
    match outcome {
        Ok(report) => {
            print(&report);
            0
        }
        Err(e) => {
            print(&error_report(&command, &config, &e));
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
