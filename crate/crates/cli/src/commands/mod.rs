//! Command registry. Each command reads the shared flags it needs, echoes the
//! resolved values into the config and returns its results.

use std::fs;

use serde_json::Value;

use corrdyn::Chain;

use crate::args::CommonArgs;
use crate::error::{CliError, CliResult};
use crate::report::RunContext;

mod blocks;
mod compose;
mod construct61;
mod info;
mod measure;
mod normality;

pub use construct61::{run_pipeline, Construct61Params, Construct61Summary};

pub trait Command: Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value>;
}

static REGISTRY: [&dyn Command; 6] = [
    &info::Info,
    &compose::Compose,
    &measure::Measure,
    &blocks::Blocks,
    &normality::Normality,
    &construct61::Construct61,
];

pub fn registry() -> &'static [&'static dyn Command] {
    &REGISTRY
}

pub fn lookup(name: &str) -> Option<&'static dyn Command> {
    REGISTRY.iter().copied().find(|c| c.name() == name)
}

pub(crate) fn load_chain(args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Chain> {
    let path = args.require_chain()?;
    ctx.config("chain", path.display().to_string());
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(corrdyn::format::parse_chain(&text)?)
}
