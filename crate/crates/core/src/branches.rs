//! Branch-level analysis: continuation of backward branches, enumeration of
//! forward iteration paths and a Marty-type normality indicator.

use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use crate::poly::BihomPoly;
use crate::roots::RootSet;
use crate::sphere::{chordal_distance, Chart, ProjPoint, C64};
use crate::{Error, Result};

pub const DEFAULT_MAX_STEP: f64 = 0.05;
pub const DEFAULT_CRITICAL_MARGIN: f64 = 1e-3;
pub const DEFAULT_PATH_BUDGET: u128 = 1_000_000;
const JUMP_SLACK: f64 = 1e-9;

/// Derivatives of `P` in the chart coordinates of `z` and `w`.
fn chart_partials(poly: &BihomPoly, z: &ProjPoint, w: &ProjPoint) -> (C64, C64) {
    let d = poly.hom_partials(z, w);
    let pz = if z.chart() == Chart::Zero { d[1] } else { d[0] };
    let pw = if w.chart() == Chart::Zero { d[3] } else { d[2] };
    (pz, pw)
}

fn chart_weight(p: &ProjPoint) -> f64 {
    1.0 + p.chart_coord().1.norm_sqr()
}

/// Spherical derivative of the local map `z -> w` along the curve.
pub fn forward_spherical_derivative(poly: &BihomPoly, z: &ProjPoint, w: &ProjPoint) -> f64 {
    let (pz, pw) = chart_partials(poly, z, w);
    (pz / pw).norm() * chart_weight(z) / chart_weight(w)
}

/// Spherical derivative of the local map `w -> z` along the curve.
pub fn backward_spherical_derivative(poly: &BihomPoly, z: &ProjPoint, w: &ProjPoint) -> f64 {
    let (pz, pw) = chart_partials(poly, z, w);
    (pw / pz).norm() * chart_weight(w) / chart_weight(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchOptions {
    /// Distance kept from critical value candidates; `None` waives the check.
    pub critical_margin: Option<f64>,
    /// Longer base steps are subdivided along the geodesic.
    pub max_step: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            critical_margin: Some(DEFAULT_CRITICAL_MARGIN),
            max_step: DEFAULT_MAX_STEP,
        }
    }
}

/// A backward branch of one component followed along a base path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchGerm {
    pub component: usize,
    /// Refined base path actually used.
    pub base: Vec<ProjPoint>,
    /// Tracked root over each base point.
    pub values: Vec<ProjPoint>,
}

impl BranchGerm {
    pub fn current(&self) -> ProjPoint {
        *self.values.last().unwrap()
    }

    pub fn base_point(&self) -> ProjPoint {
        *self.base.last().unwrap()
    }
}

fn refine(path: &[ProjPoint], max_step: f64) -> Vec<ProjPoint> {
    let mut out = vec![path[0]];
    for pair in path.windows(2) {
        let d = chordal_distance(&pair[0], &pair[1]);
        let k = (d / max_step).ceil().max(1.0) as usize;
        for s in 1..=k {
            out.push(pair[0].lerp(&pair[1], s as f64 / k as f64));
        }
    }
    out
}

/// Follows the root `start_root` of component `component` over `base_path`,
/// picking the nearest fiber root at each step.
pub fn continue_branch(
    c: &Chain,
    component: usize,
    start_root: &ProjPoint,
    base_path: &[ProjPoint],
    opts: &BranchOptions,
) -> Result<BranchGerm> {
    let comp = c
        .components()
        .get(component)
        .ok_or_else(|| Error::InvalidInput(format!("no component {component}")))?;
    if base_path.is_empty() {
        return Err(Error::InvalidInput("empty base path".into()));
    }
    if comp.poly.residual(start_root, &base_path[0]) > 1e-7 {
        return Err(Error::InvalidInput(
            "start root does not lie over the first base point".into(),
        ));
    }
    let base = refine(base_path, opts.max_step);
    if let Some(margin) = opts.critical_margin {
        let candidates = c.critical_value_candidates()?;
        for p in &base {
            for q in &candidates {
                let distance = chordal_distance(p, q);
                if distance < margin {
                    return Err(Error::CriticalProximity {
                        point: *p,
                        candidate: *q,
                        distance,
                    });
                }
            }
        }
    }
    let mut values = vec![*start_root];
    for (step, pair) in base.windows(2).enumerate() {
        let prev = *values.last().unwrap();
        let fiber = c.component_backward(component, &pair[1])?;
        let (next, moved) = fiber.nearest(&prev).expect("fiber is never empty");
        if fiber.len() > 1 {
            let lip = backward_spherical_derivative(&comp.poly, &prev, &pair[0]);
            let bound = 3.0 * lip * chordal_distance(&pair[0], &pair[1]) + JUMP_SLACK;
            if !(moved <= bound) {
                return Err(Error::RootJumpDetected {
                    step: step + 1,
                    moved,
                    bound,
                });
            }
        }
        values.push(next);
    }
    Ok(BranchGerm {
        component,
        base,
        values,
    })
}

/// One forward iteration path `z_0, ..., z_N` with the component used at each
/// step. `weight` counts coincident continuations (root and chain
/// multiplicities).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub points: Vec<ProjPoint>,
    pub components: Vec<usize>,
    pub weight: u64,
}

/// Every forward path of length `n` from `z0`, breadth first.
pub fn enumerate_paths(
    c: &Chain,
    z0: &ProjPoint,
    n: u32,
    budget: u128,
) -> Result<Vec<PathRecord>> {
    let d0 = c.degrees().d0 as u128;
    let required = d0.checked_pow(n).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::SizeBudgetExceeded { required, budget });
    }
    let mut level = vec![PathRecord {
        points: vec![*z0],
        components: Vec::new(),
        weight: 1,
    }];
    for _ in 0..n {
        let mut next = Vec::with_capacity(level.len());
        for rec in &level {
            let z = *rec.points.last().unwrap();
            for (j, comp) in c.components().iter().enumerate() {
                for (w, m) in c.component_forward(j, &z)?.roots() {
                    let mut r = rec.clone();
                    r.points.push(*w);
                    r.components.push(j);
                    r.weight *= (*m * comp.mult) as u64;
                    next.push(r);
                }
            }
        }
        level = next;
    }
    Ok(level)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalityFlag {
    Normal,
    NonNormal,
    Inconclusive,
}

impl NormalityFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormalityFlag::Normal => "Normal",
            NormalityFlag::NonNormal => "NonNormal",
            NormalityFlag::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartyConfig {
    pub depth: u32,
    /// Probe half-length, roughly chordal.
    pub probe_radius: f64,
    pub critical_margin: f64,
    /// Normal when late depths stay within this factor of the middle depth.
    pub bound_factor: f64,
    /// NonNormal when each of the last `growth_steps` depths grows by this.
    pub growth_factor: f64,
    pub growth_steps: usize,
    pub search_iters: usize,
    pub path_budget: u128,
}

impl Default for MartyConfig {
    fn default() -> Self {
        MartyConfig {
            depth: 12,
            probe_radius: 0.05,
            critical_margin: DEFAULT_CRITICAL_MARGIN,
            bound_factor: 4.0,
            growth_factor: 2.0,
            growth_steps: 3,
            search_iters: 40,
            path_budget: DEFAULT_PATH_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartyOutcome {
    /// Largest spherical derivative seen over all depths.
    pub score: f64,
    /// Largest spherical derivative per depth 1..=depth.
    pub per_depth: Vec<f64>,
    pub flag: NormalityFlag,
    pub note: Option<String>,
}

impl MartyOutcome {
    fn inconclusive(note: String) -> Self {
        MartyOutcome {
            score: f64::NAN,
            per_depth: Vec::new(),
            flag: NormalityFlag::Inconclusive,
            note: Some(note),
        }
    }
}

/// Reusable probe: forward critical candidates are computed once per chain.
pub struct MartyProbe<'a> {
    chain: &'a Chain,
    cfg: MartyConfig,
    candidates: Vec<ProjPoint>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_TRACK_STEPS: usize = 20_000;

impl<'a> MartyProbe<'a> {
    pub fn new(chain: &'a Chain, cfg: MartyConfig) -> Result<Self> {
        if cfg.depth == 0 || !(cfg.probe_radius > 0.0) {
            return Err(Error::InvalidInput(
                "normality probe needs depth >= 1 and a positive radius".into(),
            ));
        }
        let candidates = chain.transpose().critical_value_candidates()?;
        Ok(MartyProbe {
            chain,
            cfg,
            candidates,
        })
    }

    pub fn config(&self) -> &MartyConfig {
        &self.cfg
    }

    /// Spherical derivatives of the iterate branches near `z0`, sup'd over
    /// two orthogonal probe segments, then classified.
    pub fn indicator(&self, z0: &ProjPoint) -> MartyOutcome {
        match self.scores(z0) {
            Ok(logs) => self.classify(logs),
            Err(e) => MartyOutcome::inconclusive(e.to_string()),
        }
    }

    fn scores(&self, z0: &ProjPoint) -> Result<Vec<f64>> {
        let n = self.cfg.depth as usize;
        let paths = enumerate_paths(self.chain, z0, self.cfg.depth, self.cfg.path_budget)?;
        let mut best = vec![f64::NEG_INFINITY; n];
        let (chart, s0) = z0.chart_coord();
        let h = self.cfg.probe_radius * (1.0 + s0.norm_sqr());
        for path in &paths {
            for p in &path.points[..n] {
                for q in &self.candidates {
                    let distance = chordal_distance(p, q);
                    if distance < self.cfg.critical_margin {
                        return Err(Error::CriticalProximity {
                            point: *p,
                            candidate: *q,
                            distance,
                        });
                    }
                }
            }
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let delta = dir * h;
                let eval = |t: f64| self.path_logs(path, chart, s0, delta * t);
                self.segment_max(eval, &mut best)?;
            }
        }
        Ok(best)
    }

    /// Golden-section search for the deepest log derivative on `t in [-1, 1]`;
    /// every evaluated point also feeds the shallower depths.
    fn segment_max(
        &self,
        eval: impl Fn(f64) -> Result<Vec<f64>>,
        best: &mut [f64],
    ) -> Result<()> {
        let mut record = |v: Vec<f64>| -> Result<f64> {
            for (b, x) in best.iter_mut().zip(&v) {
                if x.is_nan() || *x == f64::INFINITY {
                    return Err(Error::InvalidInput("unbounded derivative (critical point)".into()));
                }
                *b = b.max(*x);
            }
            Ok(*v.last().unwrap())
        };
        for t in [0.0, -1.0, 1.0] {
            record(eval(t)?)?;
        }
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = record(eval(x1)?)?;
        let mut f2 = record(eval(x2)?)?;
        for _ in 0..self.cfg.search_iters {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = record(eval(x1)?)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = record(eval(x2)?)?;
            }
        }
        Ok(())
    }

    /// Prefix sums of log spherical derivatives of the path's branch at the
    /// displaced start `s0 + offset`.
    fn path_logs(&self, path: &PathRecord, chart: Chart, s0: C64, offset: C64) -> Result<Vec<f64>> {
        let start = ProjPoint::from_chart(chart, s0 + offset);
        let comps = self.chain.components();
        let single_valued = path.components.iter().all(|&j| comps[j].poly.dw() == 1);
        let values = if offset == C64::new(0.0, 0.0) {
            path.points[1..].to_vec()
        } else if single_valued {
            let mut out = Vec::with_capacity(path.components.len());
            let mut cur = start;
            for &j in &path.components {
                let roots = self.chain.component_forward(j, &cur)?;
                cur = roots.roots()[0].0;
                out.push(cur);
            }
            out
        } else {
            self.track(path, chart, s0, offset)?
        };
        let mut acc = 0.0;
        let mut prev = start;
        let mut logs = Vec::with_capacity(values.len());
        for (&j, v) in path.components.iter().zip(&values) {
            acc += forward_spherical_derivative(&comps[j].poly, &prev, v).ln();
            logs.push(acc);
            prev = *v;
        }
        Ok(logs)
    }

    /// Continues every level of a multivalued path from `s0` to
    /// `s0 + offset` with adaptive steps.
    fn track(&self, path: &PathRecord, chart: Chart, s0: C64, offset: C64) -> Result<Vec<ProjPoint>> {
        let comps = self.chain.components();
        let base = |t: f64| ProjPoint::from_chart(chart, s0 + offset * t);
        let mut vals = path.points[1..].to_vec();
        let (mut t, mut dt) = (0.0f64, 0.125f64);
        for step in 0.. {
            if t >= 1.0 {
                break;
            }
            if step >= MAX_TRACK_STEPS || dt < 1e-10 {
                return Err(Error::RootJumpDetected {
                    step,
                    moved: f64::NAN,
                    bound: dt,
                });
            }
            dt = dt.min(1.0 - t);
            let mut prev_old = base(t);
            let mut prev_new = base(t + dt);
            let mut trial = Vec::with_capacity(vals.len());
            let mut ok = true;
            for (&j, old) in path.components.iter().zip(&vals) {
                let moved_base = chordal_distance(&prev_old, &prev_new);
                let fiber: RootSet = self.chain.component_forward(j, &prev_new)?;
                let (next, moved) = fiber.nearest(old).expect("fiber is never empty");
                if moved_base > DEFAULT_MAX_STEP {
                    ok = false;
                    break;
                }
                if fiber.len() > 1 {
                    let lip = forward_spherical_derivative(&comps[j].poly, &prev_old, old);
                    if !(moved <= 3.0 * lip * moved_base + JUMP_SLACK) {
                        ok = false;
                        break;
                    }
                }
                trial.push(next);
                prev_old = *old;
                prev_new = next;
            }
            if ok {
                vals = trial;
                t += dt;
                dt = (dt * 2.0).min(0.25);
            } else {
                dt *= 0.5;
            }
        }
        Ok(vals)
    }

    fn classify(&self, logs: Vec<f64>) -> MartyOutcome {
        let n = logs.len();
        let per_depth: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        let score = per_depth.iter().cloned().fold(0.0, f64::max);
        let k = self.cfg.growth_steps;
        let growth = self.cfg.growth_factor.ln() + (1.0 - 1e-9f64).ln();
        let grows = n > k && logs[n - k - 1..].windows(2).all(|w| w[1] - w[0] >= growth);
        let mid = n.div_ceil(2).max(1);
        let cap = logs[mid - 1] + self.cfg.bound_factor.ln();
        let bounded = logs[mid - 1..].iter().all(|&l| l <= cap);
        let flag = if grows {
            NormalityFlag::NonNormal
        } else if bounded {
            NormalityFlag::Normal
        } else {
            NormalityFlag::Inconclusive
        };
        MartyOutcome {
            score,
            per_depth,
            flag,
            note: None,
        }
    }
}

pub fn marty_indicator(c: &Chain, z0: &ProjPoint, cfg: &MartyConfig) -> Result<MartyOutcome> {
    Ok(MartyProbe::new(c, cfg.clone())?.indicator(z0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(terms: &[(usize, usize, f64)]) -> Chain {
        Chain::single(BihomPoly::from_real_terms(terms).unwrap()).unwrap()
    }

    fn squaring() -> Chain {
        chain(&[(0, 1, 1.0), (2, 0, -1.0)])
    }

    fn pt(re: f64, im: f64) -> ProjPoint {
        ProjPoint::affine(C64::new(re, im))
    }

    fn segment(a: ProjPoint, b: ProjPoint, k: usize) -> Vec<ProjPoint> {
        (0..=k).map(|s| a.lerp(&b, s as f64 / k as f64)).collect()
    }

    #[test]
    fn continue_square_root() {
        let g = continue_branch(
            &squaring(),
            0,
            &pt(2.0, 0.0),
            &[pt(4.0, 0.0), pt(9.0, 0.0)],
            &BranchOptions::default(),
        )
        .unwrap();
        assert!(g.current().approx_eq(&pt(3.0, 0.0), 1e-9));
        let c = squaring();
        let poly = &c.components()[0].poly;
        for (v, b) in g.values.iter().zip(&g.base) {
            assert!(poly.residual(v, b) <= 1e-7);
        }
    }

    #[test]
    fn loop_around_branch_point() {
        let circle: Vec<ProjPoint> = (0..=64)
            .map(|k| ProjPoint::affine(C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 64.0)))
            .collect();
        let strict = BranchOptions {
            critical_margin: Some(0.75),
            ..BranchOptions::default()
        };
        assert!(matches!(
            continue_branch(&squaring(), 0, &pt(1.0, 0.0), &circle, &strict),
            Err(Error::CriticalProximity { .. })
        ));
        let waived = BranchOptions {
            critical_margin: None,
            ..BranchOptions::default()
        };
        let g = continue_branch(&squaring(), 0, &pt(1.0, 0.0), &circle, &waived).unwrap();
        assert!(g.current().approx_eq(&pt(-1.0, 0.0), 1e-9));
    }

    #[test]
    fn involution_branch_is_exact() {
        let c = chain(&[(1, 1, 1.0), (0, 0, -1.0)]);
        let path = segment(pt(2.0, 1.0), pt(-0.5, 3.0), 7);
        let g = continue_branch(&c, 0, &pt(0.4, -0.2), &path, &BranchOptions::default()).unwrap();
        for (v, b) in g.values.iter().zip(&g.base) {
            let inv = ProjPoint::affine(C64::new(1.0, 0.0) / b.to_affine().unwrap());
            assert!(v.approx_eq(&inv, 1e-12));
        }
    }

    #[test]
    fn bad_start_root_rejected() {
        let r = continue_branch(
            &squaring(),
            0,
            &pt(5.0, 0.0),
            &[pt(4.0, 0.0)],
            &BranchOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn path_examples() {
        let p = enumerate_paths(&squaring(), &pt(2.0, 0.0), 2, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].weight, 1);
        assert!(p[0].points[2].approx_eq(&pt(16.0, 0.0), 1e-12));

        let sym = chain(&[(2, 2, 1.0), (0, 0, -1.0)]);
        let p = enumerate_paths(&sym, &pt(2.0, 0.0), 1, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(p.iter().map(|r| r.weight).sum::<u64>(), 2);
        assert!(p.iter().any(|r| r.points[1].approx_eq(&pt(0.5, 0.0), 1e-12)));
        assert!(p.iter().any(|r| r.points[1].approx_eq(&pt(-0.5, 0.0), 1e-12)));

        let esc = chain(&[(1, 0, 1.0), (0, 2, -1.0)]);
        let p = enumerate_paths(&esc, &pt(4.0, 0.0), 1, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(p.len(), 2);

        assert!(matches!(
            enumerate_paths(&esc, &pt(4.0, 0.0), 30, DEFAULT_PATH_BUDGET),
            Err(Error::SizeBudgetExceeded { .. })
        ));
    }

    #[test]
    fn marty_examples() {
        let cfg = MartyConfig::default();
        let c = squaring();
        let at = |x: f64| marty_indicator(&c, &pt(x, 0.0), &cfg).unwrap();
        assert_eq!(at(0.5).flag, NormalityFlag::Normal);
        assert_eq!(at(2.0).flag, NormalityFlag::Normal);
        let one = at(1.0);
        assert_eq!(one.flag, NormalityFlag::NonNormal);
        for w in one.per_depth.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!((one.per_depth[11] / 4096.0 - 1.0).abs() < 1e-6, "{:?}", one.per_depth);

        let inv = chain(&[(1, 1, 1.0), (0, 0, -1.0)]);
        for z in [pt(0.3, 0.2), pt(-3.0, 1.0), ProjPoint::INFINITY] {
            assert_eq!(marty_indicator(&inv, &z, &cfg).unwrap().flag, NormalityFlag::Normal);
        }
    }

    #[test]
    fn marty_near_circle() {
        let cfg = MartyConfig::default();
        let c = squaring();
        let probe = MartyProbe::new(&c, cfg).unwrap();
        for k in 0..12 {
            let t = 0.37 + k as f64 * 0.5;
            for r in [0.97, 1.03, 1.0] {
                let z = ProjPoint::affine(C64::from_polar(r, t));
                assert_eq!(probe.indicator(&z).flag, NormalityFlag::NonNormal, "r={r} t={t}");
            }
            for r in [0.6, 1.6] {
                let z = ProjPoint::affine(C64::from_polar(r, t));
                assert_eq!(probe.indicator(&z).flag, NormalityFlag::Normal, "r={r} t={t}");
            }
        }
    }

    #[test]
    fn marty_multivalued_tracker_runs() {
        let sym = chain(&[(2, 2, 1.0), (0, 0, -1.0)]);
        let cfg = MartyConfig {
            depth: 4,
            ..MartyConfig::default()
        };
        let out = marty_indicator(&sym, &pt(0.4, 0.3), &cfg).unwrap();
        assert_eq!(out.per_depth.len(), 4);
        assert!(out.per_depth.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn branch_round_trip(a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::TAU, ra in 0.5f64..2.0, rb in 0.5f64..2.0) {
            let c = squaring();
            let p = ProjPoint::affine(C64::from_polar(ra, a));
            let q = ProjPoint::affine(C64::from_polar(rb, b));
            let root = c.component_backward(0, &p).unwrap().roots()[0].0;
            let opts = BranchOptions { critical_margin: Some(0.05), ..BranchOptions::default() };
            let there = continue_branch(&c, 0, &root, &[p, q], &opts);
            prop_assume!(there.is_ok());
            let there = there.unwrap();
            let back = continue_branch(&c, 0, &there.current(), &[q, p], &opts).unwrap();
            prop_assert!(chordal_distance(&back.current(), &root) <= 1e-6);
        }

        #[test]
        fn one_step_paths_match_forward_fiber(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            use crate::chain::Correspondence;
            let sym = chain(&[(2, 2, 1.0), (0, 0, -1.0)]);
            let z = pt(re, im);
            prop_assume!(z.norm() > 1e-3);
            let paths = enumerate_paths(&sym, &z, 1, DEFAULT_PATH_BUDGET).unwrap();
            let fiber = sym.forward(&z).unwrap();
            prop_assert_eq!(paths.iter().map(|p| p.weight).sum::<u64>(), fiber.total_multiplicity() as u64);
            for (w, m) in fiber.roots() {
                let hits: u64 = paths.iter().filter(|p| p.points[1] == *w).map(|p| p.weight).sum();
                prop_assert_eq!(hits, *m as u64);
            }
        }
    }
}
