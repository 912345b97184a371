use serde_json::{json, Value};

use corrdyn::format::encode_cellset;
use corrdyn::measure::{pf_converge, BlockOperator, GridFunction, TestDictionary};
use corrdyn::relation::{
    attractor_block_check, find_attractor_block, omega_limit_cells, strong_repeller_witness,
    BlockVerdict, CellSet, Direction, ImageParams, WitnessTrace,
};
use corrdyn::{AtlasGrid, Correspondence, ProjPoint, C64};

use super::{load_chain, Command};
use crate::args::{parse_direction, parse_point, parse_region, CommonArgs};
use crate::error::{CliError, CliResult};
use crate::report::{num, point_json, RunContext};

pub struct Blocks;

pub(crate) const PF_TOL: f64 = 1e-3;

pub(crate) fn verdict_json(grid: &AtlasGrid, v: &BlockVerdict) -> Value {
    match v {
        BlockVerdict::Certified => json!({ "verdict": "Certified" }),
        BlockVerdict::Refuted { cell } => json!({
            "verdict": "Refuted",
            "cell": cell,
            "cell_center": point_json(&grid.center(*cell)),
        }),
    }
}

pub(crate) fn witness_json(t: &WitnessTrace, tol: f64) -> Value {
    json!({
        "verdict": format!("{:?}", t.verdict),
        "steps": t.distances.len() - 1,
        "final_distance": t.distances.last().copied().unwrap_or(f64::NAN),
        "first_step_within_tol": t.first_within(tol),
        "max_residual": t.residuals.iter().cloned().fold(0.0, f64::max),
        "final_point": point_json(t.points.last().unwrap()),
    })
}

pub(crate) fn save_cells(ctx: &mut RunContext, name: &str, s: &CellSet) -> CliResult<()> {
    let text = serde_json::to_string(&encode_cellset(s)).expect("cell set serializes");
    ctx.write(name, text.as_bytes())?;
    Ok(())
}

fn pf_summary(c: &dyn Correspondence, block: &CellSet, n_max: usize) -> Value {
    let op = match BlockOperator::new(c, block) {
        Ok(op) => op,
        Err(e) => return json!({ "error": e.to_string() }),
    };
    let dict = TestDictionary::standard();
    let mut worst: f64 = 0.0;
    let mut longest = 0;
    let mut all = true;
    let mut limits = Vec::new();
    for i in 0..dict.len() {
        let f0 = GridFunction::from_fn(block, |p| C64::new(dict.eval(i, p), 0.0));
        match pf_converge(&op, &f0, n_max, PF_TOL) {
            Ok(r) => {
                worst = worst.max(*r.oscillations.last().unwrap());
                longest = longest.max(r.oscillations.len() - 1);
                all &= r.converged;
                limits.push(num(r.limit.re));
            }
            Err(e) => return json!({ "error": e.to_string() }),
        }
    }
    json!({
        "n_max": n_max,
        "tol": PF_TOL,
        "all_converged": all,
        "max_final_oscillation": worst,
        "max_iterations": longest,
        "limits": limits,
    })
}

impl Command for Blocks {
    fn name(&self) -> &'static str {
        "blocks"
    }

    fn about(&self) -> &'static str {
        "attractor block search, omega limit cells, witnesses and the block transfer operator"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let chain = load_chain(args, ctx)?;
        let n = args.grid_or(64)?;
        let grid = AtlasGrid::new(n);
        let dir = parse_direction(args.direction.as_deref().unwrap_or("bwd"))?;
        let region_text = args
            .region
            .clone()
            .ok_or_else(|| CliError::Config("--region is required".into()))?;
        let region = parse_region(&region_text)?;
        let max_dilation = args.max_dilation.unwrap_or(n / 4).max(1);
        let params = ImageParams::default();
        let max_iters = 4 * n;
        let target = args.target.as_deref().map(parse_point).transpose()?;
        let witness_start: Option<ProjPoint> = args.start.first().map(|s| parse_point(s)).transpose()?;
        let steps = args.witness_steps.unwrap_or(40);
        let pf_steps = args.depth.unwrap_or(25) as usize;
        ctx.config("grid", n);
        ctx.config("direction", format!("{dir:?}"));
        ctx.config("region", region_text);
        ctx.config("max_dilation", max_dilation);
        ctx.config("samples_per_cell", params.samples_per_cell);
        ctx.config("padding", params.padding);
        ctx.config("omega_max_iters", max_iters);
        ctx.config("target", target.as_ref().map(point_json));
        ctx.config("start", witness_start.as_ref().map(point_json));
        ctx.config("witness_steps", steps);
        ctx.config("pf_steps", pf_steps);

        let seed = CellSet::from_region(&grid, &region);
        if seed.is_empty() {
            return Err(CliError::Config("region meets no cells".into()));
        }
        save_cells(ctx, "seed.json", &seed)?;
        let seed_verdict = ctx.timed("seed_check", || attractor_block_check(&chain, &seed, dir, &params))?;
        let found = if seed_verdict.is_certified() {
            let omega = ctx.timed("omega", || omega_limit_cells(&chain, &seed, dir, &params, max_iters))?;
            Some((seed.clone(), 0, omega))
        } else {
            ctx.timed("search", || {
                find_attractor_block(&chain, &seed, dir, max_dilation, &params, max_iters)
            })?
            .map(|f| (f.block, f.dilation, f.omega))
        };

        let mut results = json!({
            "seed_cells": seed.count(),
            "seed_check": verdict_json(&grid, &seed_verdict),
        });
        match &found {
            Some((block, dilation, omega)) => {
                save_cells(ctx, "block.json", block)?;
                save_cells(ctx, "omega.json", omega)?;
                results["block"] = json!({
                    "found": true,
                    "dilation": dilation,
                    "cells": block.count(),
                    "omega_cells": omega.count(),
                    "omega_in_interior": omega.is_subset(&block.interior()),
                    "omega_max_distance_to_target": target.map(|t| omega.max_distance_to(&t)),
                });
                if dir == Direction::Backward {
                    results["transfer_operator"] =
                        ctx.timed("transfer_operator", || pf_summary(&chain, block, pf_steps));
                }
            }
            None => results["block"] = json!({ "found": false }),
        }
        if let (Some(w), Some(t)) = (witness_start, target) {
            let trace = ctx.timed("witness", || strong_repeller_witness(&chain, &w, &t, steps))?;
            results["witness"] = witness_json(&trace, corrdyn::relation::WITNESS_TOL);
        }
        Ok(results)
    }
}
