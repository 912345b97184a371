//! Invariant-measure estimates from backward orbits, sphere histograms, a
//! fixed dictionary of test functions and the block transfer operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Correspondence;
use crate::relation::CellSet;
use crate::sphere::{chordal_distance, AtlasGrid, ProjPoint, C64};
use crate::{Error, Result};

pub const DEFAULT_TREE_BUDGET: u128 = 1_000_000;
pub const MIN_SAMPLES: usize = 1000;

/// Finitely supported probability measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointCloud {
    pub points: Vec<(ProjPoint, f64)>,
}

impl WeightedPointCloud {
    pub fn dirac(p: ProjPoint) -> Self {
        WeightedPointCloud {
            points: vec![(p, 1.0)],
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|(_, w)| w).sum()
    }

    pub fn integrate(&self, phi: impl Fn(&ProjPoint) -> f64) -> f64 {
        self.points.iter().map(|(p, w)| w * phi(p)).sum()
    }

    /// `|sum w z^m / sum w|` for m = 1..=max_m over the affine points.
    pub fn circular_moments(&self, max_m: u32) -> Vec<f64> {
        let finite: Vec<(C64, f64)> = self
            .points
            .iter()
            .filter_map(|(p, w)| p.to_affine().map(|z| (z, *w)))
            .collect();
        let total: f64 = finite.iter().map(|x| x.1).sum();
        (1..=max_m as i32)
            .map(|m| {
                let s: C64 = finite.iter().map(|(z, w)| z.powi(m) * *w).sum();
                if total > 0.0 {
                    s.norm() / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn to_histogram(&self, grid: &AtlasGrid) -> SphereHistogram {
        let mut h = SphereHistogram::zero(grid);
        for (p, w) in &self.points {
            h.mass[grid.locate(p)] += w;
        }
        h
    }
}

/// `d1^-n (F^n)^* delta_z` expanded exactly, level by level.
pub fn pullback_tree<C: Correspondence + ?Sized>(
    c: &C,
    z: &ProjPoint,
    depth: u32,
    budget: u128,
) -> Result<WeightedPointCloud> {
    let d1 = c.degrees().d1 as u128;
    let required = d1.checked_pow(depth).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::SizeBudgetExceeded { required, budget });
    }
    let mut level = WeightedPointCloud::dirac(*z);
    for _ in 0..depth {
        let next: Vec<Vec<(ProjPoint, f64)>> = level
            .points
            .par_iter()
            .map(|(p, w)| {
                let fiber = c.backward(p)?;
                let total = fiber.total_multiplicity() as f64;
                Ok(fiber
                    .roots()
                    .iter()
                    .map(|(q, m)| (*q, w * *m as f64 / total))
                    .collect())
            })
            .collect::<Result<_>>()?;
        level = WeightedPointCloud {
            points: next.into_iter().flatten().collect(),
        };
    }
    Ok(level)
}

/// RNG for one sample: the master seed selects the key, the sample index the
/// stream, so results do not depend on scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One random leaf of the pullback tree; each root is picked with
/// probability proportional to its multiplicity.
pub fn sample_backward_orbit<C: Correspondence + ?Sized>(
    c: &C,
    z: &ProjPoint,
    depth: u32,
    rng: &mut impl Rng,
) -> Result<ProjPoint> {
    let mut p = *z;
    for _ in 0..depth {
        let fiber = c.backward(&p)?;
        let mut k = rng.random_range(0..fiber.total_multiplicity());
        for (q, m) in fiber.roots() {
            if k < *m {
                p = *q;
                break;
            }
            k -= m;
        }
    }
    Ok(p)
}

/// Mass per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereHistogram {
    grid: AtlasGrid,
    mass: Vec<f64>,
}

impl SphereHistogram {
    pub fn zero(grid: &AtlasGrid) -> Self {
        SphereHistogram {
            grid: grid.clone(),
            mass: vec![0.0; grid.num_cells()],
        }
    }

    pub fn dirac(grid: &AtlasGrid, p: &ProjPoint) -> Self {
        let mut h = Self::zero(grid);
        h.mass[grid.locate(p)] = 1.0;
        h
    }

    pub fn from_mass(grid: &AtlasGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.num_cells() {
            return Err(Error::GridMismatch);
        }
        Ok(SphereHistogram {
            grid: grid.clone(),
            mass,
        })
    }

    pub fn grid(&self) -> &AtlasGrid {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Cell-center quadrature.
    pub fn integrate(&self, phi: impl Fn(&ProjPoint) -> f64) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(k, m)| m * phi(&self.grid.center(k)))
            .sum()
    }

    pub fn mass_in(&self, s: &CellSet) -> f64 {
        s.members().map(|k| self.mass[k]).sum()
    }

    /// Cells carrying more than `threshold` mass.
    pub fn support(&self, threshold: f64) -> CellSet {
        CellSet::from_cells(
            &self.grid,
            self.mass
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > threshold)
                .map(|(k, _)| k),
        )
    }
}

/// Endpoints of `nsamples` independent backward orbits of length `depth`,
/// in sample index order.
pub fn sample_points<C: Correspondence + ?Sized>(
    c: &C,
    z: &ProjPoint,
    depth: u32,
    nsamples: usize,
    seed: u64,
) -> Result<Vec<ProjPoint>> {
    (0..nsamples as u64)
        .into_par_iter()
        .map(|i| sample_backward_orbit(c, z, depth, &mut sample_rng(seed, i)))
        .collect()
}

/// Bins `nsamples` independent backward orbits of length `depth`.
pub fn estimate_measure<C: Correspondence + ?Sized>(
    c: &C,
    z: &ProjPoint,
    depth: u32,
    nsamples: usize,
    grid: &AtlasGrid,
    seed: u64,
) -> Result<SphereHistogram> {
    if depth == 0 {
        return Ok(SphereHistogram::dirac(grid, z));
    }
    if nsamples < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {nsamples}"
        )));
    }
    Ok(bin_points(&sample_points(c, z, depth, nsamples, seed)?, grid))
}

/// Equal-weight histogram of a sample; counts are integers, so the result
/// does not depend on accumulation order.
pub fn bin_points(points: &[ProjPoint], grid: &AtlasGrid) -> SphereHistogram {
    let mut counts = vec![0u64; grid.num_cells()];
    for p in points {
        counts[grid.locate(p)] += 1;
    }
    let n = points.len().max(1) as f64;
    SphereHistogram {
        grid: grid.clone(),
        mass: counts.into_iter().map(|c| c as f64 / n).collect(),
    }
}

/// Parameters shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub depth: u32,
    pub samples: usize,
    pub seed: u64,
    pub budget: u128,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            depth: 20,
            samples: 100_000,
            seed: 0,
            budget: DEFAULT_TREE_BUDGET,
        }
    }
}

pub trait MeasureEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(
        &self,
        c: &dyn Correspondence,
        z: &ProjPoint,
        cfg: &MeasureConfig,
    ) -> Result<WeightedPointCloud>;
}

pub struct TreeEstimator;
pub struct SamplerEstimator;
/// Exact tree while it fits in the budget, sampling beyond.
pub struct AutoEstimator;

impl MeasureEstimator for TreeEstimator {
    fn name(&self) -> &'static str {
        "tree"
    }

    fn estimate(
        &self,
        c: &dyn Correspondence,
        z: &ProjPoint,
        cfg: &MeasureConfig,
    ) -> Result<WeightedPointCloud> {
        pullback_tree(c, z, cfg.depth, cfg.budget)
    }
}

impl MeasureEstimator for SamplerEstimator {
    fn name(&self) -> &'static str {
        "sampler"
    }

    fn estimate(
        &self,
        c: &dyn Correspondence,
        z: &ProjPoint,
        cfg: &MeasureConfig,
    ) -> Result<WeightedPointCloud> {
        if cfg.depth == 0 {
            return Ok(WeightedPointCloud::dirac(*z));
        }
        if cfg.samples < MIN_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_SAMPLES} samples, got {}",
                cfg.samples
            )));
        }
        let w = 1.0 / cfg.samples as f64;
        let pts = sample_points(c, z, cfg.depth, cfg.samples, cfg.seed)?;
        Ok(WeightedPointCloud {
            points: pts.into_iter().map(|p| (p, w)).collect(),
        })
    }
}

impl MeasureEstimator for AutoEstimator {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn estimate(
        &self,
        c: &dyn Correspondence,
        z: &ProjPoint,
        cfg: &MeasureConfig,
    ) -> Result<WeightedPointCloud> {
        let d1 = c.degrees().d1 as u128;
        let fits = d1
            .checked_pow(cfg.depth)
            .is_some_and(|r| r <= cfg.budget);
        if fits {
            TreeEstimator.estimate(c, z, cfg)
        } else {
            SamplerEstimator.estimate(c, z, cfg)
        }
    }
}

pub const ESTIMATOR_NAMES: [&str; 3] = ["auto", "tree", "sampler"];

pub fn estimator(name: &str) -> Option<Box<dyn MeasureEstimator>> {
    match name {
        "auto" => Some(Box::new(AutoEstimator)),
        "tree" => Some(Box::new(TreeEstimator)),
        "sampler" => Some(Box::new(SamplerEstimator)),
        _ => None,
    }
}

/// 64 Gaussian bumps in chordal distance around a Fibonacci lattice, then
/// the constant 1 (index 64). Changing this breaks comparability of reports.
#[derive(Clone, Debug, PartialEq)]
pub struct TestDictionary {
    centers: Vec<ProjPoint>,
    sigma: f64,
}

pub const DICTIONARY_VERSION: &str = "fib64-sigma0.3-const/1";

impl Default for TestDictionary {
    fn default() -> Self {
        Self::standard()
    }
}

impl TestDictionary {
    pub fn standard() -> Self {
        let n = 64;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let centers = (0..n)
            .map(|k| {
                let h = 1.0 - (2 * k + 1) as f64 / n as f64;
                let r = (1.0 - h * h).sqrt();
                let t = golden * k as f64;
                ProjPoint::from_sphere([r * t.cos(), r * t.sin(), h])
            })
            .collect();
        TestDictionary {
            centers,
            sigma: 0.3,
        }
    }

    /// Only the constant function.
    pub fn constant_only() -> Self {
        TestDictionary {
            centers: Vec::new(),
            sigma: 0.3,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn centers(&self) -> &[ProjPoint] {
        &self.centers
    }

    pub fn eval(&self, i: usize, p: &ProjPoint) -> f64 {
        match self.centers.get(i) {
            Some(a) => {
                let d = chordal_distance(p, a);
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            }
            None => 1.0,
        }
    }

    pub fn eval_all(&self, p: &ProjPoint) -> Vec<f64> {
        (0..self.len()).map(|i| self.eval(i, p)).collect()
    }

    pub fn integrals(&self, h: &SphereHistogram) -> Vec<f64> {
        let mut acc = vec![0.0; self.len()];
        for (k, &m) in h.mass.iter().enumerate() {
            if m > 0.0 {
                let c = h.grid.center(k);
                for (a, v) in acc.iter_mut().zip(self.eval_all(&c)) {
                    *a += m * v;
                }
            }
        }
        acc
    }
}

/// Largest dictionary integral difference.
pub fn weakstar_distance(
    h1: &SphereHistogram,
    h2: &SphereHistogram,
    dict: &TestDictionary,
) -> Result<f64> {
    if h1.grid != h2.grid {
        return Err(Error::GridMismatch);
    }
    Ok(dict
        .integrals(h1)
        .iter()
        .zip(dict.integrals(h2))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `max_phi |d1^-1 int Lambda[phi] dh - int phi dh|` over the dictionary.
pub fn check_pullback_invariance<C: Correspondence + ?Sized>(
    c: &C,
    h: &SphereHistogram,
    dict: &TestDictionary,
) -> Result<f64> {
    let d1 = c.degrees().d1 as f64;
    let cells: Vec<usize> = (0..h.mass.len()).filter(|&k| h.mass[k] > 0.0).collect();
    let rows: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&k| {
            let x = h.grid.center(k);
            let mut row: Vec<f64> = dict.eval_all(&x).iter().map(|v| -v).collect();
            for (q, m) in c.backward(&x)?.roots() {
                for (r, v) in row.iter_mut().zip(dict.eval_all(q)) {
                    *r += *m as f64 * v / d1;
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut defect = vec![0.0; dict.len()];
    for (&k, row) in cells.iter().zip(rows) {
        for (d, r) in defect.iter_mut().zip(row) {
            *d += h.mass[k] * r;
        }
    }
    // the constant is exact by construction
    if let Some(last) = defect.last_mut() {
        *last = 0.0;
    }
    Ok(defect.iter().map(|d| d.abs()).fold(0.0, f64::max))
}

/// Complex values on the member cells of a block, in member order.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    block: CellSet,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn new(block: &CellSet, values: Vec<C64>) -> Result<Self> {
        if values.len() != block.count() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} cells",
                values.len(),
                block.count()
            )));
        }
        Ok(GridFunction {
            block: block.clone(),
            values,
        })
    }

    pub fn constant(block: &CellSet, c: C64) -> Self {
        GridFunction {
            block: block.clone(),
            values: vec![c; block.count()],
        }
    }

    /// Samples `phi` at cell centers.
    pub fn from_fn(block: &CellSet, phi: impl Fn(&ProjPoint) -> C64) -> Self {
        let grid = block.grid();
        GridFunction {
            block: block.clone(),
            values: block.members().map(|k| phi(&grid.center(k))).collect(),
        }
    }

    pub fn block(&self) -> &CellSet {
        &self.block
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max of the real and imaginary ranges
    pub fn oscillation(&self) -> f64 {
        let range = |f: fn(&C64) -> f64| {
            let (lo, hi) = self
                .values
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v), h.max(v))
                });
            if lo.is_finite() {
                hi - lo
            } else {
                0.0
            }
        };
        range(|v| v.re).max(range(|v| v.im))
    }

    pub fn mean(&self) -> C64 {
        if self.values.is_empty() {
            return C64::new(0.0, 0.0);
        }
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }

    /// Value at the member cell `idx`.
    pub fn at_cell(&self, idx: usize) -> Option<C64> {
        if !self.block.contains(idx) {
            return None;
        }
        let pos = self.block.members().take_while(|&k| k < idx).count();
        Some(self.values[pos])
    }
}

/// Transfer operator `f -> d1^-1 sum_{backward fiber} f`, assembled once as a
/// sparse Markov matrix over the block's member cells.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    block: CellSet,
    rows: Vec<Vec<(u32, f64)>>,
}

impl BlockOperator {
    pub fn new<C: Correspondence + ?Sized>(c: &C, block: &CellSet) -> Result<Self> {
        let grid = block.grid();
        let mut slot = vec![u32::MAX; grid.num_cells()];
        for (pos, k) in block.members().enumerate() {
            slot[k] = pos as u32;
        }
        let members: Vec<usize> = block.members().collect();
        let rows = members
            .par_iter()
            .map(|&k| {
                let x = grid.center(k);
                let fiber = c.backward(&x)?;
                let total = fiber.total_multiplicity() as f64;
                let mut row = Vec::new();
                for (q, m) in fiber.roots() {
                    let home = grid.locate(q);
                    if slot[home] == u32::MAX {
                        return Err(Error::FiberEscapedBlock(x));
                    }
                    let stencil: Vec<(usize, f64)> = grid
                        .bilinear_stencil(q)
                        .into_iter()
                        .filter(|&(s, w)| slot[s] != u32::MAX && w > 0.0)
                        .collect();
                    let sum: f64 = stencil.iter().map(|s| s.1).sum();
                    let share = *m as f64 / total;
                    if sum > 0.0 {
                        row.extend(
                            stencil
                                .into_iter()
                                .map(|(s, w)| (slot[s], share * w / sum)),
                        );
                    } else {
                        row.push((slot[home], share));
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(BlockOperator {
            block: block.clone(),
            rows,
        })
    }

    pub fn block(&self) -> &CellSet {
        &self.block
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.block != self.block {
            return Err(Error::GridMismatch);
        }
        let values = self
            .rows
            .par_iter()
            .map(|row| {
                row.iter()
                    .map(|&(s, w)| f.values[s as usize] * w)
                    .sum::<C64>()
            })
            .collect();
        Ok(GridFunction {
            block: self.block.clone(),
            values,
        })
    }
}

pub fn pf_apply<C: Correspondence + ?Sized>(c: &C, f: &GridFunction) -> Result<GridFunction> {
    BlockOperator::new(c, &f.block)?.apply(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfOutcome {
    /// Mean of the last iterate.
    pub limit: C64,
    /// Oscillation of `A^n f0` for n = 0, 1, ...
    pub oscillations: Vec<f64>,
    pub converged: bool,
}

/// Iterates until the oscillation drops to `tol` or `n_max` steps. Failure
/// to converge is data, not an error.
pub fn pf_converge(
    op: &BlockOperator,
    f0: &GridFunction,
    n_max: usize,
    tol: f64,
) -> Result<PfOutcome> {
    let mut f = f0.clone();
    let mut oscillations = vec![f.oscillation()];
    while *oscillations.last().unwrap() > tol && oscillations.len() <= n_max {
        f = op.apply(&f)?;
        oscillations.push(f.oscillation());
    }
    Ok(PfOutcome {
        limit: f.mean(),
        converged: *oscillations.last().unwrap() <= tol,
        oscillations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Chain;
    use crate::poly::BihomPoly;
    use crate::relation::Region;
    use proptest::prelude::*;

    fn chain(terms: &[(usize, usize, f64)]) -> Chain {
        Chain::single(BihomPoly::from_real_terms(terms).unwrap()).unwrap()
    }

    fn squaring() -> Chain {
        chain(&[(0, 1, 1.0), (2, 0, -1.0)])
    }

    fn escaping() -> Chain {
        chain(&[(1, 0, 1.0), (0, 2, -1.0)])
    }

    fn pt(re: f64, im: f64) -> ProjPoint {
        ProjPoint::affine(C64::new(re, im))
    }

    fn has(cloud: &WeightedPointCloud, p: ProjPoint, w: f64) -> bool {
        cloud
            .points
            .iter()
            .any(|(q, v)| q.approx_eq(&p, 1e-9) && (v - w).abs() < 1e-12)
    }

    #[test]
    fn tree_examples() {
        let t = pullback_tree(&squaring(), &pt(4.0, 0.0), 1, DEFAULT_TREE_BUDGET).unwrap();
        assert_eq!(t.points.len(), 2);
        assert!(has(&t, pt(2.0, 0.0), 0.5) && has(&t, pt(-2.0, 0.0), 0.5));

        let r = 2f64.sqrt();
        let t = pullback_tree(&squaring(), &pt(4.0, 0.0), 2, DEFAULT_TREE_BUDGET).unwrap();
        for p in [pt(r, 0.0), pt(-r, 0.0), pt(0.0, r), pt(0.0, -r)] {
            assert!(has(&t, p, 0.25));
        }

        let t = pullback_tree(&escaping(), &pt(1.1, 0.0), 3, DEFAULT_TREE_BUDGET).unwrap();
        assert_eq!(t.points.len(), 1);
        assert!(has(&t, pt(1.1f64.powi(8), 0.0), 1.0));

        assert!(matches!(
            pullback_tree(&squaring(), &pt(4.0, 0.0), 21, DEFAULT_TREE_BUDGET),
            Err(Error::SizeBudgetExceeded { .. })
        ));
    }

    fn frequency(c: &Chain, z: ProjPoint, target: ProjPoint) -> f64 {
        let hits = (0..10_000u64)
            .filter(|&i| {
                let mut rng = sample_rng(7, i);
                sample_backward_orbit(c, &z, 1, &mut rng)
                    .unwrap()
                    .approx_eq(&target, 1e-9)
            })
            .count();
        hits as f64 / 10_000.0
    }

    #[test]
    fn sampler_examples() {
        assert!((frequency(&squaring(), pt(4.0, 0.0), pt(2.0, 0.0)) - 0.5).abs() <= 0.02);
        let sym = chain(&[(2, 2, 1.0), (0, 0, -1.0)]);
        assert!((frequency(&sym, pt(1.0, 0.0), pt(1.0, 0.0)) - 0.5).abs() <= 0.02);
        let mut rng = sample_rng(1, 0);
        let p = sample_backward_orbit(&squaring(), &ProjPoint::ZERO, 9, &mut rng).unwrap();
        assert_eq!(p, ProjPoint::ZERO);
    }

    #[test]
    fn estimate_examples() {
        let g = AtlasGrid::new(32);
        let h = estimate_measure(&squaring(), &pt(3.0, 0.0), 20, 20_000, &g, 1).unwrap();
        assert!((h.total() - 1.0).abs() < 1e-9);
        let ring = CellSet::from_region(
            &g,
            &Region::Annulus {
                inner: 0.9,
                outer: 1.1,
            },
        );
        assert!(h.mass_in(&ring) >= 0.99);

        let h = estimate_measure(&escaping(), &pt(3.0, 0.0), 8, 1000, &g, 1).unwrap();
        let near: f64 = (0..g.num_cells())
            .filter(|&k| chordal_distance(&g.center(k), &ProjPoint::INFINITY) <= 0.05)
            .map(|k| h.mass()[k])
            .sum();
        assert!(near >= 0.999);

        let h = estimate_measure(&squaring(), &pt(0.3, 0.1), 0, 10, &g, 1).unwrap();
        assert_eq!(h.mass()[g.locate(&pt(0.3, 0.1))], 1.0);

        assert!(estimate_measure(&squaring(), &pt(3.0, 0.0), 3, 10, &g, 1).is_err());
    }

    #[test]
    fn circle_moments_vanish() {
        let cloud = WeightedPointCloud {
            points: (0..8)
                .map(|k| {
                    let z = C64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 8.0);
                    (ProjPoint::affine(z), 0.125)
                })
                .collect(),
        };
        assert!(cloud.circular_moments(4).iter().all(|&x| x < 1e-12));
        let two = WeightedPointCloud::dirac(pt(2.0, 0.0));
        assert!((two.circular_moments(2)[1] - 4.0).abs() < 1e-12);

        let cfg = MeasureConfig {
            depth: 3,
            ..MeasureConfig::default()
        };
        for name in ESTIMATOR_NAMES {
            let est = estimator(name).unwrap();
            let cloud = est.estimate(&squaring(), &pt(4.0, 0.0), &cfg).unwrap();
            assert!((cloud.total_weight() - 1.0).abs() < 1e-9, "{name}");
        }
        assert!(estimator("bogus").is_none());
    }

    #[test]
    fn estimates_are_seed_deterministic() {
        let g = AtlasGrid::new(16);
        let a = estimate_measure(&squaring(), &pt(3.0, 0.0), 10, 2000, &g, 42).unwrap();
        let b = estimate_measure(&squaring(), &pt(3.0, 0.0), 10, 2000, &g, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dictionary_and_distance() {
        let d = TestDictionary::standard();
        assert_eq!(d.len(), 65);
        let g = AtlasGrid::new(32);
        let h0 = SphereHistogram::dirac(&g, &ProjPoint::ZERO);
        let hi = SphereHistogram::dirac(&g, &ProjPoint::INFINITY);
        assert_eq!(weakstar_distance(&h0, &h0, &d).unwrap(), 0.0);
        assert!(weakstar_distance(&h0, &hi, &d).unwrap() >= 0.5);
        for i in 0..d.len() {
            let v = d.eval(i, &pt(0.2, -0.7));
            assert!(v > 0.0 && v <= 1.0);
        }
        let other = SphereHistogram::dirac(&AtlasGrid::new(16), &ProjPoint::ZERO);
        assert_eq!(weakstar_distance(&h0, &other, &d), Err(Error::GridMismatch));
    }

    #[test]
    fn invariance_examples() {
        let g = AtlasGrid::new(64);
        let h = SphereHistogram::dirac(&g, &pt(0.3, 0.7));
        let d1 = check_pullback_invariance(&squaring(), &h, &TestDictionary::constant_only());
        assert_eq!(d1.unwrap(), 0.0);
        let defect =
            check_pullback_invariance(&squaring(), &h, &TestDictionary::standard()).unwrap();
        assert!(defect > 0.1);

        let est = estimate_measure(&squaring(), &pt(3.0, 0.0), 20, 100_000, &g, 3).unwrap();
        let defect =
            check_pullback_invariance(&squaring(), &est, &TestDictionary::standard()).unwrap();
        assert!(defect <= 0.02, "defect {defect}");
    }

    fn escape_block(g: &AtlasGrid) -> CellSet {
        CellSet::from_region(g, &Region::Outside { radius: 2.0 })
    }

    #[test]
    fn pf_examples() {
        let g = AtlasGrid::new(32);
        let block = escape_block(&g);
        let op = BlockOperator::new(&escaping(), &block).unwrap();
        let five = GridFunction::constant(&block, C64::new(5.0, 0.0));
        let out = op.apply(&five).unwrap();
        assert!(out.values().iter().all(|v| (v - 5.0).norm() < 1e-12));
        let res = pf_converge(&op, &five, 10, 1e-9).unwrap();
        assert_eq!(res.oscillations.len(), 1);
        assert!(res.converged && (res.limit - 5.0).norm() < 1e-12);

        let dict = TestDictionary::standard();
        for i in [0, 17, 40, 63] {
            let f0 = GridFunction::from_fn(&block, |p| C64::new(dict.eval(i, p), 0.0));
            let res = pf_converge(&op, &f0, 25, 1e-3).unwrap();
            assert!(res.converged, "phi {i}: {:?}", res.oscillations);
            let target = dict.eval(i, &ProjPoint::INFINITY);
            assert!((res.limit.re - target).abs() < 1e-2, "phi {i}");
            for w in res.oscillations[3.min(res.oscillations.len())..].windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn pf_escape_is_reported() {
        let g = AtlasGrid::new(32);
        let disk = CellSet::from_region(
            &g,
            &Region::Disk {
                center: C64::new(0.0, 0.0),
                radius: 0.5,
            },
        );
        assert!(matches!(
            BlockOperator::new(&squaring(), &disk),
            Err(Error::FiberEscapedBlock(_))
        ));
    }

    #[test]
    fn pf_on_circle_block() {
        let g = AtlasGrid::new(64);
        let block = CellSet::from_region(
            &g,
            &Region::Annulus {
                inner: 0.8,
                outer: 1.25,
            },
        );
        let op = BlockOperator::new(&squaring(), &block).unwrap();
        let re = GridFunction::from_fn(&block, |p| C64::new(p.to_affine().unwrap().re, 0.0));
        let out = op.apply(&re).unwrap();
        let one = out.at_cell(g.locate(&pt(1.0, 0.0))).unwrap();
        assert!(one.norm() < 0.05);

        let dict = TestDictionary::standard();
        for i in [5, 30, 33] {
            let f0 = GridFunction::from_fn(&block, |p| C64::new(dict.eval(i, p), 0.0));
            let res = pf_converge(&op, &f0, 200, 1e-4).unwrap();
            let avg: f64 = (0..4096)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 4096.0;
                    dict.eval(i, &ProjPoint::affine(C64::from_polar(1.0, t)))
                })
                .sum::<f64>()
                / 4096.0;
            assert!((res.limit.re - avg).abs() <= 0.02, "phi {i}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn operator_is_markov(vals in proptest::collection::vec(-10.0f64..10.0, 1..400), c0 in -5.0f64..5.0) {
            let g = AtlasGrid::new(16);
            let block = escape_block(&g);
            let op = BlockOperator::new(&escaping(), &block).unwrap();
            let n = block.count();
            let f = GridFunction::new(&block, (0..n).map(|k| C64::new(vals[k % vals.len()], 0.0)).collect()).unwrap();
            let out = op.apply(&f).unwrap();
            prop_assert!(out.sup_norm() <= f.sup_norm() * (1.0 + 1e-12));
            let k = GridFunction::constant(&block, C64::new(c0, 0.0));
            let out = op.apply(&k).unwrap();
            prop_assert!(out.values().iter().all(|v| (v.re - c0).abs() <= 1e-12 * c0.abs().max(1.0)));
        }

        #[test]
        fn tree_weights_sum_to_one(re in -3.0f64..3.0, im in -3.0f64..3.0, depth in 0u32..6) {
            let t = pullback_tree(&squaring(), &pt(re, im), depth, DEFAULT_TREE_BUDGET).unwrap();
            prop_assert!((t.total_weight() - 1.0).abs() <= 1e-9);
        }
    }
}
