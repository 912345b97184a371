use rayon::prelude::*;
use serde_json::{json, Value};

use corrdyn::branches::{MartyConfig, MartyProbe, NormalityFlag};
use corrdyn::{AtlasGrid, Chart, ProjPoint, C64};

use super::measure::{estimate, measure_config, write_histogram, SUPPORT_THRESHOLD};
use super::{load_chain, Command};
use crate::args::CommonArgs;
use crate::error::CliResult;
use crate::render::{chart_ppm, flag_rgb, normality_csv};
use crate::report::{point_json, RunContext};

pub struct Normality;

impl Command for Normality {
    fn name(&self) -> &'static str {
        "normality"
    }

    fn about(&self) -> &'static str {
        "spherical-derivative normality flags per cell, overlaid on the measure support"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let chain = load_chain(args, ctx)?;
        let grid = AtlasGrid::new(args.grid_or(64)?);
        let cfg = MartyConfig {
            depth: args.depth.unwrap_or(12),
            ..MartyConfig::default()
        };
        ctx.config("grid", grid.resolution());
        ctx.config("normality", serde_json::to_value(&cfg).expect("config serializes"));
        let probe = MartyProbe::new(&chain, cfg)?;
        let cells: Vec<(ProjPoint, f64, NormalityFlag)> = ctx.timed("flags", || {
            (0..grid.num_cells())
                .into_par_iter()
                .map(|k| {
                    let p = grid.center(k);
                    let out = probe.indicator(&p);
                    (p, out.score, out.flag)
                })
                .collect()
        });

        // measure support overlay
        let (mcfg, name) = measure_config(args, ctx, 20)?;
        let start = args.starts_or(&[ProjPoint::affine(C64::new(3.0, 0.0))])?[0];
        ctx.config("start", point_json(&start));
        let (h, _) = ctx.timed("measure", || estimate(&chain, &start, &grid, &mcfg, &name))?;
        let support = h.support(SUPPORT_THRESHOLD);
        let mut overlap = [0usize; 3];
        let mut counts = [0usize; 3];
        for (k, (_, _, f)) in cells.iter().enumerate() {
            let slot = *f as usize;
            counts[slot] += 1;
            if support.contains(k) {
                overlap[slot] += 1;
            }
        }

        if ctx.has_out() {
            ctx.write("normality.csv", normality_csv(&cells).as_bytes())?;
            for chart in [Chart::Zero, Chart::One] {
                let img = chart_ppm(&grid, chart, |k| flag_rgb(cells[k].2));
                ctx.write(&format!("flags_chart{}.ppm", chart.index()), &img)?;
            }
            write_histogram(ctx, "support_measure", &h)?;
        }
        Ok(json!({
            "cells": grid.num_cells(),
            "flag_counts": { "Normal": counts[0], "NonNormal": counts[1], "Inconclusive": counts[2] },
            "support_threshold": SUPPORT_THRESHOLD,
            "support_cells": support.count(),
            "support_overlap": { "Normal": overlap[0], "NonNormal": overlap[1], "Inconclusive": overlap[2] },
        }))
    }
}
