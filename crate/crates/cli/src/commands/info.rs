use serde_json::{json, Value};


use super::{load_chain, Command};
use crate::args::CommonArgs;
use crate::error::CliResult;
use crate::report::{point_json, RunContext};

pub struct Info;

impl Command for Info {
    fn name(&self) -> &'static str {
        "info"
    }

    fn about(&self) -> &'static str {
        "degrees, components and critical value candidates of a chain"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let chain = load_chain(args, ctx)?;
        let d = chain.degrees();
        let backward = ctx.timed("critical_values", || chain.critical_value_candidates())?;
        let forward = chain.transpose().critical_value_candidates()?;
        Ok(json!({
            "degrees": { "d0": d.d0, "d1": d.d1 },
            "components": chain.components().iter().map(|c| json!({
                "bidegree": [c.poly.dz(), c.poly.dw()],
                "mult": c.mult,
            })).collect::<Vec<_>>(),
            "critical_value_candidates": backward.iter().map(point_json).collect::<Vec<_>>(),
            "forward_critical_value_candidates": forward.iter().map(point_json).collect::<Vec<_>>(),
        }))
    }
}
