//! Sum-of-graphs construction: a polynomial graph `{w = p(z)}` plus the
//! transposed graph of an iterate `{z = Q^N(w)}`, searched for an N whose sum
//! admits a backward attractor block around the support of p's measure, with
//! an attracting fixed point of Q inside and a converging repeller witness.

use serde_json::{json, Value};

use corrdyn::chain::{poly_map, GraphOrientation};
use corrdyn::format::write_chain;
use corrdyn::measure::{estimate_measure, weakstar_distance, TestDictionary};
use corrdyn::poly::HomUnivariate;
use corrdyn::relation::{
    attractor_block_check, find_attractor_block, strong_repeller_witness, CellSet, Direction,
    ImageParams, WitnessVerdict, WITNESS_TOL,
};
use corrdyn::roots::{roots_homogeneous, DEFAULT_CLUSTER_RADIUS};
use corrdyn::sphere::chordal_distance;
use corrdyn::{
    AtlasGrid, BihomPoly, Chain, Component, CorrespondenceSum, PolyGraph,
    ProjPoint, C64,
};

use super::blocks::{save_cells, verdict_json, witness_json};
use super::measure::SUPPORT_THRESHOLD;
use super::Command;
use crate::args::{parse_coeffs, CommonArgs};
use crate::error::{CliError, CliResult};
use crate::report::{num, point_json, RunContext};

#[derive(Clone, Debug)]
pub struct Construct61Params {
    /// Ascending coefficients of p.
    pub p: Vec<C64>,
    /// Ascending coefficients of Q.
    pub q: Vec<C64>,
    pub max_n: u32,
    pub grid: usize,
    pub seed: u64,
    pub samples: usize,
    pub measure_depth: u32,
    pub max_dilation: usize,
    pub witness_steps: usize,
}

impl Construct61Params {
    pub fn new(p: Vec<C64>, q: Vec<C64>, max_n: u32, grid: usize) -> Self {
        Construct61Params {
            p,
            q,
            max_n,
            grid,
            seed: 0,
            samples: 20_000,
            measure_depth: 20,
            max_dilation: (grid / 8).max(1),
            witness_steps: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Construct61Summary {
    pub certified_n: Option<u32>,
    pub reasons: Vec<String>,
    pub results: Value,
    pub chain_text: Option<String>,
    pub block: Option<CellSet>,
}

impl Construct61Summary {
    pub fn verdict(&self) -> &'static str {
        if self.reasons.is_empty() {
            "Certified"
        } else {
            "NotCertified"
        }
    }
}

fn trimmed(mut c: Vec<C64>) -> Vec<C64> {
    while c.len() > 1 && c.last().is_some_and(|x| x.norm() == 0.0) {
        c.pop();
    }
    c
}

/// `{w = p(z)}` as a chain of bidegree (deg p, 1).
fn graph_chain(p: &[C64]) -> corrdyn::Result<Chain> {
    let mut terms = vec![(0, 1, C64::new(1.0, 0.0))];
    for (k, c) in p.iter().enumerate() {
        if c.norm() > 0.0 {
            terms.push((k, 0, -c));
        }
    }
    Chain::single(BihomPoly::from_terms(&terms)?)
}

fn poly_compose(outer: &[C64], inner: &[C64]) -> Vec<C64> {
    let mut acc = vec![*outer.last().unwrap()];
    for c in outer.iter().rev().skip(1) {
        let mut next = vec![C64::new(0.0, 0.0); acc.len() + inner.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, b) in inner.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        next[0] += c;
        acc = next;
    }
    acc
}

/// Monomial chain of the sum, or `None` when the expanded iterate is too
/// ill-conditioned to represent faithfully.
fn monomial_sum(p: &[C64], q: &[C64], n: u32) -> Option<Chain> {
    let mut qn = q.to_vec();
    for _ in 1..n {
        qn = poly_compose(q, &qn);
    }
    let graph = PolyGraph::new(q.to_vec(), n, GraphOrientation::ZOfW).ok()?;
    for k in 0..16 {
        let x = ProjPoint::affine(C64::from_polar(0.5 + 0.05 * k as f64, 0.7 * k as f64));
        if chordal_distance(&poly_map(&qn, &x), &graph.map(&x)) > 1e-9 {
            return None;
        }
    }
    // {z = Q^N(w)}: z1 w0^D - sum c_k w1^k w0^(D-k) z0
    let mut terms = vec![(1, 0, C64::new(1.0, 0.0))];
    for (k, c) in qn.iter().enumerate() {
        if c.norm() > 0.0 {
            terms.push((0, k, -c));
        }
    }
    let g1 = BihomPoly::from_terms(&terms).ok()?;
    let g2 = graph_chain(p).ok()?;
    let mut comps = vec![Component { poly: g1, mult: 1 }];
    comps.extend(g2.components().iter().cloned());
    Chain::new(comps).ok()
}

fn sum_of(gamma1: &PolyGraph, gamma2: &Chain) -> CorrespondenceSum {
    CorrespondenceSum::new(vec![Box::new(gamma1.clone()), Box::new(gamma2.clone())])
}

/// Runs the whole search; a negative outcome is a verdict, not an error.
pub fn run_pipeline(
    params: &Construct61Params,
    ctx: &mut RunContext,
) -> CliResult<Construct61Summary> {
    let p = trimmed(params.p.clone());
    let q = trimmed(params.q.clone());
    if p.len() < 3 || q.len() < 3 {
        return Err(CliError::Config(
            "both p and Q need degree at least 2".into(),
        ));
    }
    if params.max_n == 0 {
        return Err(CliError::Config("--max-n must be at least 1".into()));
    }
    let grid = AtlasGrid::new(params.grid);
    let img = ImageParams::default();
    let max_iters = 4 * params.grid;
    let mut reasons = Vec::new();
    let mut results = json!({});

    // block around the support of p's measure
    let gamma2 = graph_chain(&p)?;
    let start = ProjPoint::affine(C64::new(3.0, 0.0));
    let h = ctx.timed("support_measure", || {
        estimate_measure(&gamma2, &start, params.measure_depth, params.samples, &grid, params.seed)
    })?;
    let support = h.support(SUPPORT_THRESHOLD);
    let found = ctx.timed("block_search", || {
        find_attractor_block(&gamma2, &support, Direction::Backward, params.max_dilation, &img, max_iters)
    })?;
    results["support_cells"] = json!(support.count());
    let Some(found) = found else {
        reasons.push("no backward attractor block for p around its measure support".into());
        results["block"] = json!({ "found": false });
        return Ok(finish(results, reasons, None, None, None));
    };
    let block = found.block;
    save_cells(ctx, "block.json", &block)?;
    results["block"] = json!({
        "found": true,
        "dilation": found.dilation,
        "cells": block.count(),
        "omega_cells": found.omega.count(),
    });

    let crit = gamma2.critical_value_candidates()?;
    let crit_in_block: Vec<Value> = crit
        .iter()
        .filter(|c| block.contains(grid.locate(c)))
        .map(point_json)
        .collect();
    results["critical_values"] = json!({
        "points": crit.iter().map(point_json).collect::<Vec<_>>(),
        "in_block": crit_in_block,
    });
    if !crit_in_block.is_empty() {
        reasons.push("critical values of p meet the block".into());
    }

    // search over N
    let dq = (q.len() - 1) as u64;
    let dp = (p.len() - 1) as u64;
    let mut attempts = Vec::new();
    let mut certified_n = None;
    for n in 1..=params.max_n {
        if dq.saturating_pow(n) < dp {
            continue;
        }
        let gamma1 = PolyGraph::new(q.clone(), n, GraphOrientation::ZOfW)?;
        let v1 = ctx.timed(&format!("check_iterate_{n}"), || {
            attractor_block_check(&gamma1, &block, Direction::Backward, &img)
        })?;
        let mut entry = json!({ "n": n, "iterate": verdict_json(&grid, &v1) });
        if let corrdyn::relation::BlockVerdict::Refuted { cell } = v1 {
            entry["iterate"]["image_of_cell_center"] = point_json(&gamma1.map(&grid.center(cell)));
        }
        if v1.is_certified() {
            let gamma = sum_of(&gamma1, &gamma2);
            let v = ctx.timed(&format!("check_sum_{n}"), || {
                attractor_block_check(&gamma, &block, Direction::Backward, &img)
            })?;
            entry["sum"] = verdict_json(&grid, &v);
            if v.is_certified() && certified_n.is_none() {
                certified_n = Some(n);
            }
        }
        attempts.push(entry);
        if certified_n.is_some() {
            break;
        }
    }
    results["attempts"] = json!(attempts);
    if certified_n.is_none() {
        reasons.push(format!(
            "no N <= {} certifies the iterate and the sum on the block",
            params.max_n
        ));
    }

    // attracting fixed point of Q inside the block
    let mut fix: Vec<C64> = q.clone();
    fix[1] -= C64::new(1.0, 0.0);
    let fixed = roots_homogeneous(&HomUnivariate::new(fix), DEFAULT_CLUSTER_RADIUS)?;
    let dqc: Vec<C64> = q[1..].iter().enumerate().map(|(k, c)| c * (k + 1) as f64).collect();
    let mut target = None;
    let mut fixed_json = Vec::new();
    for (z, _) in fixed.roots() {
        let Some(x) = z.to_affine() else { continue };
        let mult = dqc.iter().rev().fold(C64::new(0.0, 0.0), |a, c| a * x + c).norm();
        let in_block = block.contains(grid.locate(z));
        if mult < 1.0 && in_block && target.is_none() {
            target = Some(*z);
        }
        fixed_json.push(json!({
            "point": point_json(z),
            "multiplier_abs": mult,
            "attracting": mult < 1.0,
            "in_block": in_block,
        }));
    }
    results["fixed_points"] = json!(fixed_json);

    match target {
        None => {
            reasons.push("no attracting fixed point in block".into());
            results["witness"] = Value::Null;
        }
        Some(t) => {
            let n = certified_n.unwrap_or(params.max_n);
            let gamma = sum_of(&PolyGraph::new(q.clone(), n, GraphOrientation::ZOfW)?, &gamma2);
            let w0 = block
                .members()
                .map(|k| grid.center(k))
                .fold((ProjPoint::ZERO, -1.0), |acc, c| {
                    let d = chordal_distance(&c, &t);
                    if d > acc.1 {
                        (c, d)
                    } else {
                        acc
                    }
                })
                .0;
            let trace = ctx.timed("witness", || {
                strong_repeller_witness(&gamma, &w0, &t, params.witness_steps)
            })?;
            let mut w = witness_json(&trace, WITNESS_TOL);
            w["n"] = json!(n);
            w["start"] = point_json(&w0);
            w["target"] = point_json(&t);
            results["witness"] = w;
            if trace.verdict != WitnessVerdict::Converged {
                reasons.push(format!("witness did not converge ({:?})", trace.verdict));
            }
        }
    }

    let mut chain_text = None;
    if reasons.is_empty() {
        let n = certified_n.unwrap();
        let gamma = sum_of(&PolyGraph::new(q.clone(), n, GraphOrientation::ZOfW)?, &gamma2);
        let members: Vec<usize> = block.members().collect();
        let starts = [members[0], members[members.len() / 2], members[members.len() - 1]]
            .map(|k| grid.center(k));
        let dict = TestDictionary::standard();
        let mut hists = Vec::new();
        for (i, s) in starts.iter().enumerate() {
            hists.push(ctx.timed(&format!("measure_{i}"), || {
                estimate_measure(&gamma, s, params.measure_depth, params.samples, &grid, params.seed)
            })?);
        }
        let mut pairs = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                pairs.push(json!({
                    "pair": [a, b],
                    "weakstar_distance": num(weakstar_distance(&hists[a], &hists[b], &dict)?),
                }));
            }
        }
        results["measure"] = json!({
            "starts": starts.iter().map(point_json).collect::<Vec<_>>(),
            "pairwise": pairs,
        });
        match monomial_sum(&p, &q, n) {
            Some(c) => {
                let text = write_chain(&c);
                ctx.write("construct61_chain.json", text.as_bytes())?;
                chain_text = Some(text);
            }
            None => results["chain_file"] = json!("omitted: expanded iterate is ill-conditioned"),
        }
    }
    Ok(finish(results, reasons, certified_n, chain_text, Some(block)))
}

fn finish(
    mut results: Value,
    reasons: Vec<String>,
    certified_n: Option<u32>,
    chain_text: Option<String>,
    block: Option<CellSet>,
) -> Construct61Summary {
    let verdict = if reasons.is_empty() { "Certified" } else { "NotCertified" };
    results["verdict"] = json!(verdict);
    results["certified_n"] = json!(certified_n);
    results["reasons"] = json!(reasons);
    Construct61Summary {
        certified_n,
        reasons,
        results,
        chain_text,
        block,
    }
}

pub struct Construct61;

impl Command for Construct61 {
    fn name(&self) -> &'static str {
        "construct61"
    }

    fn about(&self) -> &'static str {
        "search for a certified sum of a polynomial graph and a transposed iterate graph"
    }

    fn run(&self, args: &CommonArgs, ctx: &mut RunContext) -> CliResult<Value> {
        let need = |v: &Option<String>, flag: &str| {
            v.as_deref()
                .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
                .and_then(parse_coeffs)
        };
        let grid = args.grid_or(128)?;
        let mut params = Construct61Params::new(need(&args.p, "p")?, need(&args.q, "q")?, args.max_n.unwrap_or(6), grid);
        params.seed = args.seed;
        if let Some(s) = args.samples {
            params.samples = s;
        }
        if let Some(d) = args.measure_depth {
            params.measure_depth = d;
        }
        if let Some(m) = args.max_dilation {
            params.max_dilation = m;
        }
        if let Some(w) = args.witness_steps {
            params.witness_steps = w;
        }
        let coeffs = |c: &[C64]| c.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>();
        ctx.config("p", json!(coeffs(&params.p)));
        ctx.config("q", json!(coeffs(&params.q)));
        ctx.config("max_n", params.max_n);
        ctx.config("grid", params.grid);
        ctx.config("seed", params.seed);
        ctx.config("samples", params.samples);
        ctx.config("measure_depth", params.measure_depth);
        ctx.config("max_dilation", params.max_dilation);
        ctx.config("witness_steps", params.witness_steps);
        Ok(run_pipeline(&params, ctx)?.results)
    }
}
