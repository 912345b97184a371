use serde_json::{json, Value};

use corrdyn::measure::{
    check_pullback_invariance, estimator, weakstar_distance, MeasureConfig, SphereHistogram,
    TestDictionary, DEFAULT_TREE_BUDGET, DICTIONARY_VERSION, ESTIMATOR_NAMES,
};
use corrdyn::{AtlasGrid, Chart, Correspondence, ProjPoint, C64};

use super::{load_chain, Command};
use crate::args::CommonArgs;
use crate::error::{CliError, CliResult};
use crate::render::{chart_ppm, histogram_csv, mass_colors};
use crate::report::{point_json, RunContext};

pub struct Measure;

pub(crate) const SUPPORT_THRESHOLD: f64 = 1e-4;

pub(crate) fn measure_config(
    args: &CommonArgs,
    ctx: &mut RunContext,
    depth_default: u32,
) -> CliResult<(MeasureConfig, String)> {
    let name = args.estimator.clone().unwrap_or_else(|| "auto".into());
    if !ESTIMATOR_NAMES.contains(&name.as_str()) {
        return Err(CliError::Config(format!(
            "unknown estimator {name:?}; expected one of {ESTIMATOR_NAMES:?}"
        )));
    }
    let cfg = MeasureConfig {
        depth: args.measure_depth.or(args.depth).unwrap_or(depth_default),
        samples: args.samples.unwrap_or(100_000),
        seed: args.seed,
        budget: args.budget.unwrap_or(DEFAULT_TREE_BUDGET),
    };
    ctx.config("estimator", name.clone());
    ctx.config("depth", cfg.depth);
    ctx.config("samples", cfg.samples);
    ctx.config("seed", cfg.seed);
    ctx.config("budget", cfg.budget.to_string());
    Ok((cfg, name))
}

/// Runs the named estimator and bins the result.
pub(crate) fn estimate(
    c: &dyn Correspondence,
    start: &ProjPoint,
    grid: &AtlasGrid,
    cfg: &MeasureConfig,
    name: &str,
) -> CliResult<(SphereHistogram, Vec<f64>)> {
    let est = estimator(name).expect("estimator name was validated");
    let cloud = est.estimate(c, start, cfg)?;
    Ok((cloud.to_histogram(grid), cloud.circular_moments(4)))
}

pub(crate) fn write_histogram(
    ctx: &mut RunContext,
    stem: &str,
    h: &SphereHistogram,
) -> CliResult<()> {
    if !ctx.has_out() {
        return Ok(());
    }
    ctx.write(&format!("{stem}.csv"), histogram_csv(h).as_bytes())?;
    let colors = mass_colors(h);
    for chart in [Chart::Zero, Chart::One] {
        let img = chart_ppm(h.grid(), chart, |k| colors[k]);
        ctx.write(&format!("{stem}_chart{}.ppm", chart.index()), &img)?;
    }
    Ok(())
}

impl Command for Measure {
    fn name(&self) -> &'static str {
        "measure"
    }

    fn about(&self) -> &'static str {
        "equidistribution estimate from backward orbits, with invariance checks"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let chain = load_chain(args, ctx)?;
        let grid = AtlasGrid::new(args.grid_or(64)?);
        ctx.config("grid", grid.resolution());
        let (cfg, name) = measure_config(args, ctx, 20)?;
        let starts = args.starts_or(&[ProjPoint::affine(C64::new(3.0, 0.0))])?;
        ctx.config("start", starts.iter().map(point_json).collect::<Vec<_>>());
        ctx.config("dictionary", DICTIONARY_VERSION);
        let dict = TestDictionary::standard();

        let mut hists = Vec::new();
        let mut per_start = Vec::new();
        for (k, z) in starts.iter().enumerate() {
            let (h, moments) = ctx.timed(&format!("estimate_{k}"), || {
                estimate(&chain, z, &grid, &cfg, &name)
            })?;
            let defect = ctx.timed(&format!("invariance_{k}"), || {
                check_pullback_invariance(&chain, &h, &dict)
            })?;
            let (top, top_mass) = h
                .mass()
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
            write_histogram(ctx, &format!("measure_{k}"), &h)?;
            per_start.push(json!({
                "start": point_json(z),
                "total_mass": h.total(),
                "circular_moments": moments,
                "invariance_defect": defect,
                "dictionary_integrals": dict.integrals(&h),
                "support_cells": h.support(SUPPORT_THRESHOLD).count(),
                "heaviest_cell": { "index": top, "center": point_json(&grid.center(top)), "mass": top_mass },
            }));
            hists.push(h);
        }
        let mut pairs = Vec::new();
        for a in 0..hists.len() {
            for b in a + 1..hists.len() {
                pairs.push(json!({
                    "pair": [a, b],
                    "weakstar_distance": weakstar_distance(&hists[a], &hists[b], &dict)?,
                }));
            }
        }
        Ok(json!({ "starts": per_start, "pairwise": pairs }))
    }
}
