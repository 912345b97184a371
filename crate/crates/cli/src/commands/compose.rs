use serde_json::{json, Value};

use corrdyn::chain::DEFAULT_ITERATE_BUDGET;
use corrdyn::format::{parse_chain, write_chain};

use super::{load_chain, Command};
use crate::args::CommonArgs;
use crate::error::{CliError, CliResult};
use crate::report::RunContext;

pub struct Compose;

impl Command for Compose {
    fn name(&self) -> &'static str {
        "compose"
    }

    fn about(&self) -> &'static str {
        "n-th iterate of a chain by resultant elimination"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let chain = load_chain(args, ctx)?;
        let n = args.power.unwrap_or(2);
        let budget = args.budget.unwrap_or(DEFAULT_ITERATE_BUDGET);
        ctx.config("power", n);
        ctx.config("budget", budget.to_string());
        let out = ctx.timed("iterate", || chain.iterate(n, budget))?;
        let text = write_chain(&out);
        let back = parse_chain(&text)?;
        let deviation = out
            .components()
            .iter()
            .zip(back.components())
            .flat_map(|(a, b)| {
                a.poly
                    .rows()
                    .into_iter()
                    .flatten()
                    .zip(b.poly.rows().into_iter().flatten())
                    .map(|(x, y)| (x - y).norm())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        if back.degrees() != out.degrees() || deviation > 1e-12 {
            return Err(CliError::Invariant(format!(
                "written chain does not re-parse faithfully (deviation {deviation:e})"
            )));
        }
        ctx.write("composed.json", text.as_bytes())?;
        let (d, e) = (chain.degrees(), out.degrees());
        let expected = (d.d0.pow(n), d.d1.pow(n));
        Ok(json!({
            "degrees": { "d0": e.d0, "d1": e.d1 },
            "expected_degrees": { "d0": expected.0, "d1": expected.1 },
            "degrees_multiply": (e.d0, e.d1) == expected,
            "components": out.components().iter().map(|c| json!({
                "bidegree": [c.poly.dz(), c.poly.dw()],
                "mult": c.mult,
            })).collect::<Vec<_>>(),
            "reparse_max_deviation": deviation,
        }))
    }
}
