//! Closed-relation dynamics on the atlas grid: images of cell sets, attractor
//! blocks, omega limit sets and greedy strong-repeller witnesses.
//!
//! Images are sample-and-pad outer approximations, not rigorous enclosures.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Correspondence;
use crate::roots::RootSet;
use crate::sphere::{chordal_distance, AtlasGrid, ProjPoint, C64};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn fiber<C: Correspondence + ?Sized>(self, c: &C, p: &ProjPoint) -> Result<RootSet> {
        match self {
            Direction::Forward => c.forward(p),
            Direction::Backward => c.backward(p),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" | "forward" => Ok(Direction::Forward),
            "bwd" | "backward" => Ok(Direction::Backward),
            other => Err(Error::InvalidInput(format!(
                "direction must be fwd or bwd, got {other:?}"
            ))),
        }
    }
}

/// Sampling density and padding used for every image computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    pub samples_per_cell: usize,
    pub padding: usize,
}

impl Default for ImageParams {
    fn default() -> Self {
        ImageParams {
            samples_per_cell: 9,
            padding: 1,
        }
    }
}

/// Simple regions used to seed cell sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    /// `|z - center| <= radius`
    Disk { center: C64, radius: f64 },
    /// `|z| >= radius`, infinity included
    Outside { radius: f64 },
    /// `inner <= |z| <= outer`
    Annulus { inner: f64, outer: f64 },
    Point(ProjPoint),
}

impl Region {
    pub fn contains(&self, p: &ProjPoint) -> bool {
        let z = p.to_affine();
        match *self {
            Region::Disk { center, radius } => z.is_some_and(|z| (z - center).norm() <= radius),
            Region::Outside { radius } => z.is_none_or(|z| z.norm() >= radius),
            Region::Annulus { inner, outer } => {
                z.is_some_and(|z| (inner..=outer).contains(&z.norm()))
            }
            Region::Point(q) => chordal_distance(p, &q) == 0.0,
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    /// `disk:cx,cy,r`, `outside:r`, `annulus:r1,r2`, `point:re,im` or `point:inf`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse region {s:?}"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if kind == "point" && rest.trim() == "inf" {
            return Ok(Region::Point(ProjPoint::INFINITY));
        }
        let nums: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("disk", [x, y, r]) if *r >= 0.0 => Ok(Region::Disk {
                center: C64::new(*x, *y),
                radius: *r,
            }),
            ("outside", [r]) => Ok(Region::Outside { radius: *r }),
            ("annulus", [a, b]) if a <= b => Ok(Region::Annulus {
                inner: *a,
                outer: *b,
            }),
            ("point", [x, y]) => Ok(Region::Point(ProjPoint::affine(C64::new(*x, *y)))),
            _ => Err(bad()),
        }
    }
}

/// Membership bitmap over all cells of a grid.
#[derive(Clone, PartialEq)]
pub struct CellSet {
    grid: AtlasGrid,
    bits: Vec<bool>,
}

impl fmt::Debug for CellSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellSet({:?}, {} cells)", self.grid, self.count())
    }
}

impl CellSet {
    pub fn empty(grid: &AtlasGrid) -> Self {
        CellSet {
            grid: grid.clone(),
            bits: vec![false; grid.num_cells()],
        }
    }

    pub fn from_bits(grid: &AtlasGrid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.num_cells() {
            return Err(Error::GridMismatch);
        }
        Ok(CellSet {
            grid: grid.clone(),
            bits,
        })
    }

    pub fn from_cells(grid: &AtlasGrid, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(grid);
        for c in cells {
            s.bits[c] = true;
        }
        s
    }

    /// Cells meeting the region (tested on a 3 x 3 sample lattice; a point
    /// region selects the cell that contains it).
    pub fn from_region(grid: &AtlasGrid, region: &Region) -> Self {
        if let Region::Point(p) = region {
            return Self::from_cells(grid, [grid.locate(p)]);
        }
        let bits = (0..grid.num_cells())
            .map(|k| grid.samples(k, 9).iter().any(|p| region.contains(p)))
            .collect();
        CellSet {
            grid: grid.clone(),
            bits,
        }
    }

    pub fn grid(&self) -> &AtlasGrid {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn insert(&mut self, idx: usize) {
        self.bits[idx] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }

    /// Adds the 1-ring (cross-chart neighbors included).
    pub fn closure(&self) -> CellSet {
        let mut out = self.clone();
        for k in self.members() {
            for &n in self.grid.neighbors(k) {
                out.bits[n] = true;
            }
        }
        out
    }

    /// Removes cells with a neighbor outside the set.
    pub fn interior(&self) -> CellSet {
        let bits = (0..self.bits.len())
            .map(|k| self.bits[k] && self.grid.neighbors(k).iter().all(|&n| self.bits[n]))
            .collect();
        CellSet {
            grid: self.grid.clone(),
            bits,
        }
    }

    /// Morphological dilation by `k` rings.
    pub fn dilate(&self, k: usize) -> CellSet {
        (0..k).fold(self.clone(), |s, _| s.closure())
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.zip(other, |a, b| a && b)
    }

    fn zip(&self, other: &CellSet, f: impl Fn(bool, bool) -> bool) -> CellSet {
        CellSet {
            grid: self.grid.clone(),
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.first_outside(other).is_none()
    }

    /// First member of `self` missing from `other`.
    pub fn first_outside(&self, other: &CellSet) -> Option<usize> {
        self.members().find(|&k| !other.bits[k])
    }

    /// Largest chordal distance from a member cell center to `p`.
    pub fn max_distance_to(&self, p: &ProjPoint) -> f64 {
        self.members()
            .map(|k| chordal_distance(&self.grid.center(k), p))
            .fold(0.0, f64::max)
    }
}

/// Cells hit by the fibers of sample points of `s`, padded by rings.
pub fn image_cells<C: Correspondence + ?Sized>(
    c: &C,
    s: &CellSet,
    dir: Direction,
    params: &ImageParams,
) -> Result<CellSet> {
    let grid = s.grid();
    let members: Vec<usize> = s.members().collect();
    let hits: Vec<Vec<usize>> = members
        .par_iter()
        .map(|&k| {
            let mut out = Vec::new();
            for p in grid.samples(k, params.samples_per_cell) {
                for q in dir.fiber(c, &p)?.points() {
                    out.push(grid.locate(q));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut img = CellSet::empty(grid);
    for h in hits {
        for k in h {
            img.bits[k] = true;
        }
    }
    Ok(img.dilate(params.padding))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockVerdict {
    Certified,
    Refuted { cell: usize },
}

impl BlockVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, BlockVerdict::Certified)
    }
}

/// Certified iff the image of the closure lands in the interior.
pub fn attractor_block_check<C: Correspondence + ?Sized>(
    c: &C,
    s: &CellSet,
    dir: Direction,
    params: &ImageParams,
) -> Result<BlockVerdict> {
    if s.is_empty() {
        return Ok(BlockVerdict::Certified);
    }
    let img = image_cells(c, &s.closure(), dir, params)?;
    Ok(match img.first_outside(&s.interior()) {
        None => BlockVerdict::Certified,
        Some(cell) => BlockVerdict::Refuted { cell },
    })
}

/// Nested intersection `K_{n+1} = image(K_n) & K_n` started from a certified
/// block; an outer approximation of the omega limit set.
pub fn omega_limit_cells<C: Correspondence + ?Sized>(
    c: &C,
    block: &CellSet,
    dir: Direction,
    params: &ImageParams,
    max_iters: usize,
) -> Result<CellSet> {
    if let BlockVerdict::Refuted { cell } = attractor_block_check(c, block, dir, params)? {
        return Err(Error::NotABlock(cell));
    }
    let mut k = block.clone();
    for _ in 0..max_iters {
        let next = image_cells(c, &k, dir, params)?.intersection(&k);
        if next == k {
            return Ok(k);
        }
        k = next;
    }
    let last = k.count();
    let current = image_cells(c, &k, dir, params)?.intersection(&k).count();
    if current == last {
        return Ok(k);
    }
    Err(Error::NoFixpoint {
        iters: max_iters,
        last,
        current,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessVerdict {
    Converged,
    Diverged,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessTrace {
    pub points: Vec<ProjPoint>,
    pub distances: Vec<f64>,
    /// On-curve residual of each consecutive pair.
    pub residuals: Vec<f64>,
    pub verdict: WitnessVerdict,
}

impl WitnessTrace {
    /// First step whose distance is within `tol`.
    pub fn first_within(&self, tol: f64) -> Option<usize> {
        self.distances.iter().position(|&d| d <= tol)
    }
}

pub const WITNESS_TOL: f64 = 1e-6;

/// Greedy backward orbit from `w`, each step taking the preimage nearest to
/// `target`.
pub fn strong_repeller_witness<C: Correspondence + ?Sized>(
    c: &C,
    w: &ProjPoint,
    target: &ProjPoint,
    steps: usize,
) -> Result<WitnessTrace> {
    let mut points = vec![*w];
    let mut distances = vec![chordal_distance(w, target)];
    let mut residuals = Vec::with_capacity(steps);
    for _ in 0..steps {
        let prev = *points.last().unwrap();
        let (next, d) = c
            .backward(&prev)?
            .nearest(target)
            .ok_or_else(|| Error::ChainInvariantViolation("empty backward fiber".into()))?;
        residuals.push(c.residual(&next, &prev));
        points.push(next);
        distances.push(d);
    }
    let n = steps;
    let tail = n.div_ceil(2);
    let last = *distances.last().unwrap();
    let monotone = distances[n - tail.min(n)..]
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-15);
    let verdict = if last <= WITNESS_TOL && monotone {
        WitnessVerdict::Converged
    } else if n >= 1 && chordal_distance(&points[n], &points[n - 1]) <= 1e-15 {
        WitnessVerdict::Stalled
    } else {
        WitnessVerdict::Diverged
    };
    Ok(WitnessTrace {
        points,
        distances,
        residuals,
        verdict,
    })
}

#[derive(Clone, Debug)]
pub struct FoundBlock {
    pub block: CellSet,
    pub dilation: usize,
    pub omega: CellSet,
}

/// First dilation of `seed` (1..=max_dilation rings) certified as a block
/// whose omega limit set sits inside its interior.
pub fn find_attractor_block<C: Correspondence + ?Sized>(
    c: &C,
    seed: &CellSet,
    dir: Direction,
    max_dilation: usize,
    params: &ImageParams,
    max_iters: usize,
) -> Result<Option<FoundBlock>> {
    if seed.is_empty() {
        return Err(Error::InvalidInput("empty seed".into()));
    }
    for k in 1..=max_dilation {
        let block = seed.dilate(k);
        if !attractor_block_check(c, &block, dir, params)?.is_certified() {
            continue;
        }
        let omega = match omega_limit_cells(c, &block, dir, params, max_iters) {
            Ok(o) => o,
            Err(Error::NoFixpoint { .. }) => continue,
            Err(e) => return Err(e),
        };
        if omega.is_subset(&block.interior()) {
            return Ok(Some(FoundBlock {
                block,
                dilation: k,
                omega,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Chain;
    use crate::poly::BihomPoly;
    use proptest::prelude::*;

    fn chain(terms: &[(usize, usize, f64)]) -> Chain {
        Chain::single(BihomPoly::from_real_terms(terms).unwrap()).unwrap()
    }

    fn squaring() -> Chain {
        chain(&[(0, 1, 1.0), (2, 0, -1.0)])
    }

    fn escaping() -> Chain {
        // z - w^2: the backward relation squares
        chain(&[(1, 0, 1.0), (0, 2, -1.0)])
    }

    fn pt(re: f64, im: f64) -> ProjPoint {
        ProjPoint::affine(C64::new(re, im))
    }

    const P: ImageParams = ImageParams {
        samples_per_cell: 9,
        padding: 1,
    };

    #[test]
    fn image_examples() {
        let g = AtlasGrid::new(32);
        let outside = CellSet::from_region(&g, &Region::Outside { radius: 2.0 });
        let img = image_cells(&escaping(), &outside, Direction::Backward, &P).unwrap();
        let far = CellSet::from_region(&g, &Region::Outside { radius: 3.0 }).dilate(1);
        assert!(img.is_subset(&far));

        let half = CellSet::from_region(
            &g,
            &Region::Disk {
                center: C64::new(0.0, 0.0),
                radius: 0.5,
            },
        );
        let img = image_cells(&squaring(), &half, Direction::Forward, &P).unwrap();
        let small = CellSet::from_region(
            &g,
            &Region::Disk {
                center: C64::new(0.0, 0.0),
                radius: 0.33,
            },
        )
        .dilate(1);
        assert!(img.is_subset(&small));

        let none = image_cells(&squaring(), &CellSet::empty(&g), Direction::Forward, &P).unwrap();
        assert!(none.is_empty());
    }

    fn block_examples(n: usize) -> [BlockVerdict; 3] {
        let g = AtlasGrid::new(n);
        let outside = CellSet::from_region(&g, &Region::Outside { radius: 2.0 });
        let half = CellSet::from_region(
            &g,
            &Region::Disk {
                center: C64::new(0.0, 0.0),
                radius: 0.5,
            },
        );
        let ring = CellSet::from_region(
            &g,
            &Region::Annulus {
                inner: 0.9,
                outer: 1.1,
            },
        );
        [
            attractor_block_check(&escaping(), &outside, Direction::Backward, &P).unwrap(),
            attractor_block_check(&squaring(), &half, Direction::Forward, &P).unwrap(),
            attractor_block_check(&squaring(), &ring, Direction::Forward, &P).unwrap(),
        ]
    }

    #[test]
    fn block_check_examples_and_refinement() {
        for n in [32, 64] {
            let [a, b, c] = block_examples(n);
            assert_eq!(a, BlockVerdict::Certified, "n={n}");
            assert_eq!(b, BlockVerdict::Certified, "n={n}");
            assert!(!c.is_certified(), "n={n}");
        }
    }

    #[test]
    fn omega_examples() {
        let g = AtlasGrid::new(32);
        let half = CellSet::from_region(
            &g,
            &Region::Disk {
                center: C64::new(0.0, 0.0),
                radius: 0.5,
            },
        );
        let om = omega_limit_cells(&squaring(), &half, Direction::Forward, &P, 100).unwrap();
        assert!(om.contains(g.locate(&ProjPoint::ZERO)));
        assert!(om.max_distance_to(&ProjPoint::ZERO) < 3.0 * g.max_cell_diameter());

        let outside = CellSet::from_region(&g, &Region::Outside { radius: 2.0 });
        let om = omega_limit_cells(&escaping(), &outside, Direction::Backward, &P, 100).unwrap();
        assert!(om.contains(g.locate(&ProjPoint::INFINITY)));
        assert!(om.max_distance_to(&ProjPoint::INFINITY) < 3.0 * g.max_cell_diameter());
        // image of the omega set stays within one ring of it
        let img = image_cells(&escaping(), &om, Direction::Backward, &P).unwrap();
        assert!(img.is_subset(&om.dilate(1)));

        let ring = CellSet::from_region(
            &g,
            &Region::Annulus {
                inner: 0.9,
                outer: 1.1,
            },
        );
        assert!(matches!(
            omega_limit_cells(&squaring(), &ring, Direction::Forward, &P, 10),
            Err(Error::NotABlock(_))
        ));
    }

    #[test]
    fn circle_block_for_backward_squaring() {
        let g = AtlasGrid::new(32);
        let seed = CellSet::from_region(
            &g,
            &Region::Annulus {
                inner: 1.0,
                outer: 1.0,
            },
        );
        let found = find_attractor_block(&squaring(), &seed, Direction::Backward, 8, &P, 100)
            .unwrap()
            .expect("circle neighborhood should certify");
        // omega covers the whole circle
        for k in 0..16 {
            let on = ProjPoint::affine(C64::from_polar(1.0, k as f64 * 0.39));
            assert!(found.omega.contains(g.locate(&on)));
        }
        assert!(found.omega.max_distance_to(&ProjPoint::ZERO) < 1.0);
    }

    #[test]
    fn witness_examples() {
        let t = strong_repeller_witness(&escaping(), &pt(2.0, 0.0), &ProjPoint::INFINITY, 12).unwrap();
        assert_eq!(t.verdict, WitnessVerdict::Converged);
        assert!(t.residuals.iter().all(|&r| r <= 1e-7));

        let t = strong_repeller_witness(&squaring(), &pt(3.0, 0.0), &pt(1.0, 0.0), 40).unwrap();
        assert_eq!(t.verdict, WitnessVerdict::Converged);
        assert!(*t.distances.last().unwrap() <= 1e-6);
        assert!(t.residuals.iter().all(|&r| r <= 1e-7));

        let t = strong_repeller_witness(&squaring(), &ProjPoint::ZERO, &pt(1.0, 0.0), 10).unwrap();
        assert_eq!(t.verdict, WitnessVerdict::Stalled);
    }

    #[test]
    fn find_block_examples() {
        let g = AtlasGrid::new(32);
        let inf = CellSet::from_region(&g, &Region::Point(ProjPoint::INFINITY));
        let found = find_attractor_block(&escaping(), &inf, Direction::Backward, 8, &P, 100)
            .unwrap()
            .unwrap();
        assert!(found.block.contains(g.locate(&ProjPoint::INFINITY)));
        assert!(found.omega.max_distance_to(&ProjPoint::INFINITY) < 0.5);

        let zero = CellSet::from_region(&g, &Region::Point(ProjPoint::ZERO));
        let found = find_attractor_block(&squaring(), &zero, Direction::Forward, 8, &P, 100)
            .unwrap()
            .unwrap();
        assert!(found.block.max_distance_to(&ProjPoint::ZERO) < 0.5);

        let one = CellSet::from_region(&g, &Region::Point(pt(1.0, 0.0)));
        assert!(find_attractor_block(&squaring(), &one, Direction::Forward, 3, &P, 100)
            .unwrap()
            .is_none());
    }

    #[test]
    fn region_parsing() {
        assert_eq!(
            "outside:2".parse::<Region>().unwrap(),
            Region::Outside { radius: 2.0 }
        );
        assert_eq!(
            "point:inf".parse::<Region>().unwrap(),
            Region::Point(ProjPoint::INFINITY)
        );
        assert!("disk:1,2".parse::<Region>().is_err());
        assert_eq!("bwd".parse::<Direction>().unwrap(), Direction::Backward);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn image_is_monotone(bits in proptest::collection::vec(any::<bool>(), 2 * 8 * 8), extra in proptest::collection::vec(any::<bool>(), 2 * 8 * 8)) {
            let g = AtlasGrid::new(8);
            let small = CellSet::from_bits(&g, bits.clone()).unwrap();
            let big = CellSet::from_bits(&g, bits.iter().zip(&extra).map(|(a, b)| *a || *b).collect()).unwrap();
            for dir in [Direction::Forward, Direction::Backward] {
                let a = image_cells(&squaring(), &small, dir, &P).unwrap();
                let b = image_cells(&squaring(), &big, dir, &P).unwrap();
                prop_assert!(a.is_subset(&b));
            }
        }
    }
}
