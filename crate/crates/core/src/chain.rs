//! Chains of bihomogeneous components and the correspondences they define.
//!
//! `forward(z)` is the w-fiber over z, `backward(w)` the z-fiber over w. Both
//! count roots with multiplicity, so their totals are `d0` and `d1`.

use serde::{Deserialize, Serialize};

use crate::poly::{BihomPoly, HomUnivariate};
use crate::roots::{roots_homogeneous, RootSet, DEFAULT_CLUSTER_RADIUS};
use crate::sphere::{chordal_distance, ProjPoint, C64};
use crate::{Error, Result};

/// Default cap on `(d0 * d1)^n` when iterating.
pub const DEFAULT_ITERATE_BUDGET: u128 = 4096;

/// Coefficient distance below which two user components count as the same.
const DUPLICATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreePair {
    pub d0: u64,
    pub d1: u64,
}

/// Anything that relates points of the sphere finitely-many-to-finitely-many.
pub trait Correspondence: Send + Sync {
    fn degrees(&self) -> DegreePair;

    /// Images of `z` with multiplicity; total is `d0`.
    fn forward(&self, z: &ProjPoint) -> Result<RootSet>;

    /// Preimages of `w` with multiplicity; total is `d1`.
    fn backward(&self, w: &ProjPoint) -> Result<RootSet>;

    /// How far `(z, w)` is from lying on the graph (0 on the graph).
    fn residual(&self, z: &ProjPoint, w: &ProjPoint) -> f64;

    /// Superset of the points over which backward fibers degenerate.
    fn critical_values(&self) -> Result<Vec<ProjPoint>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub poly: BihomPoly,
    pub mult: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    components: Vec<Component>,
}

impl Chain {
    /// Validated chain; components are kept as given (no merging).
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::ChainInvariantViolation("chain has no components".into()));
        }
        for (j, c) in components.iter().enumerate() {
            if c.mult == 0 {
                return Err(Error::ChainInvariantViolation(format!(
                    "component {j} has multiplicity 0"
                )));
            }
            if c.poly.dz() == 0 || c.poly.dw() == 0 {
                return Err(Error::ChainInvariantViolation(format!(
                    "component {j} has bidegree ({}, {}); both degrees must be positive",
                    c.poly.dz(),
                    c.poly.dw()
                )));
            }
            if let Some(why) = c.poly.line_factor() {
                return Err(Error::ChainInvariantViolation(format!(
                    "component {j} has a line factor: {why}"
                )));
            }
        }
        Ok(Chain { components })
    }

    /// Validated chain from user input: components that agree up to a unit
    /// scalar are merged and their multiplicities added.
    pub fn from_user(components: Vec<Component>) -> Result<Self> {
        let mut merged: Vec<Component> = Vec::with_capacity(components.len());
        for c in components {
            match merged
                .iter_mut()
                .find(|m| m.poly.approx_eq_up_to_unit(&c.poly, DUPLICATE_TOL))
            {
                Some(m) => m.mult += c.mult,
                None => merged.push(c),
            }
        }
        Self::new(merged)
    }

    pub fn single(poly: BihomPoly) -> Result<Self> {
        Self::new(vec![Component { poly, mult: 1 }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Formal sum of two chains.
    pub fn plus(&self, other: &Chain) -> Result<Chain> {
        let mut all = self.components.clone();
        all.extend(other.components.iter().cloned());
        Self::from_user(all)
    }

    pub fn transpose(&self) -> Chain {
        Chain {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    poly: c.poly.transpose(),
                    mult: c.mult,
                })
                .collect(),
        }
    }

    pub fn degrees(&self) -> DegreePair {
        let mut d = DegreePair { d0: 0, d1: 0 };
        for c in &self.components {
            d.d1 += (c.mult * c.poly.dz()) as u64;
            d.d0 += (c.mult * c.poly.dw()) as u64;
        }
        d
    }

    /// w-fiber of one component over `z`, without the chain multiplicity.
    pub fn component_forward(&self, j: usize, z: &ProjPoint) -> Result<RootSet> {
        let f = self.components[j].poly.fiber_poly_w(z).map_err(fiber_violation(j))?;
        roots_homogeneous(&f, DEFAULT_CLUSTER_RADIUS)
    }

    /// z-fiber of one component over `w`, without the chain multiplicity.
    pub fn component_backward(&self, j: usize, w: &ProjPoint) -> Result<RootSet> {
        let f = self.components[j].poly.fiber_poly_z(w).map_err(fiber_violation(j))?;
        roots_homogeneous(&f, DEFAULT_CLUSTER_RADIUS)
    }

    /// Chain of "first self, then `next`".
    pub fn compose(&self, next: &Chain) -> Result<Chain> {
        let mut out = Vec::with_capacity(self.components.len() * next.components.len());
        for (j, a) in self.components.iter().enumerate() {
            for (l, b) in next.components.iter().enumerate() {
                let pair = || format!("pair ({j}, {l})");
                let r = BihomPoly::resultant_mid(&a.poly, &b.poly).map_err(|e| {
                    Error::ChainInvariantViolation(format!("{}: {e}", pair()))
                })?;
                let want = (a.poly.dz() * b.poly.dz(), a.poly.dw() * b.poly.dw());
                if (r.dz(), r.dw()) != want {
                    return Err(Error::ChainInvariantViolation(format!(
                        "{}: resultant bidegree ({}, {}) short of {want:?}",
                        pair(),
                        r.dz(),
                        r.dw()
                    )));
                }
                if let Some(why) = r.line_factor() {
                    return Err(Error::ChainInvariantViolation(format!(
                        "{}: composite has a line factor: {why}",
                        pair()
                    )));
                }
                out.push(Component {
                    poly: r,
                    mult: a.mult * b.mult,
                });
            }
        }
        Chain::new(out)
    }

    /// n-fold composite. Fails when `(d0 * d1)^n` exceeds `budget`.
    pub fn iterate(&self, n: u32, budget: u128) -> Result<Chain> {
        if n == 0 {
            return Err(Error::InvalidInput("iterate needs n >= 1".into()));
        }
        let d = self.degrees();
        let required = (d.d0 as u128 * d.d1 as u128)
            .checked_pow(n)
            .unwrap_or(u128::MAX);
        if required > budget {
            return Err(Error::SizeBudgetExceeded { required, budget });
        }
        let mut out = self.clone();
        for _ in 1..n {
            out = out.compose(self)?;
        }
        Ok(out)
    }

    /// Union of discriminant roots over components.
    pub fn critical_value_candidates(&self) -> Result<Vec<ProjPoint>> {
        let mut sets = Vec::new();
        for c in &self.components {
            let disc: HomUnivariate = c.poly.discriminant_w()?;
            sets.push((roots_homogeneous(&disc, DEFAULT_CLUSTER_RADIUS)?, 1));
        }
        Ok(RootSet::union(sets, DEFAULT_CLUSTER_RADIUS)
            .points()
            .copied()
            .collect())
    }
}

fn fiber_violation(j: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::IdenticallyZeroFiber(p) => Error::ChainInvariantViolation(format!(
            "component {j} vanishes on the whole fiber over {p:?}"
        )),
        other => other,
    }
}

impl Correspondence for Chain {
    fn degrees(&self) -> DegreePair {
        Chain::degrees(self)
    }

    fn forward(&self, z: &ProjPoint) -> Result<RootSet> {
        let mut sets = Vec::with_capacity(self.components.len());
        for (j, c) in self.components.iter().enumerate() {
            sets.push((self.component_forward(j, z)?, c.mult));
        }
        Ok(merge(sets))
    }

    fn backward(&self, w: &ProjPoint) -> Result<RootSet> {
        let mut sets = Vec::with_capacity(self.components.len());
        for (j, c) in self.components.iter().enumerate() {
            sets.push((self.component_backward(j, w)?, c.mult));
        }
        Ok(merge(sets))
    }

    fn residual(&self, z: &ProjPoint, w: &ProjPoint) -> f64 {
        self.components
            .iter()
            .map(|c| c.poly.residual(z, w))
            .fold(f64::INFINITY, f64::min)
    }

    fn critical_values(&self) -> Result<Vec<ProjPoint>> {
        self.critical_value_candidates()
    }
}

fn merge(mut sets: Vec<(RootSet, usize)>) -> RootSet {
    if sets.len() == 1 && sets[0].1 == 1 {
        return sets.pop().unwrap().0;
    }
    RootSet::union(sets, DEFAULT_CLUSTER_RADIUS)
}

/// `Lambda[phi](x)`: sum of `phi` over the backward fiber of `x` with
/// multiplicity.
pub fn pullback_functional<C, F>(c: &C, phi: F, x: &ProjPoint) -> Result<C64>
where
    C: Correspondence + ?Sized,
    F: Fn(&ProjPoint) -> C64,
{
    let fiber = c.backward(x)?;
    Ok(fiber
        .roots()
        .iter()
        .map(|(p, m)| phi(p) * *m as f64)
        .sum())
}

/// Which coordinate the polynomial map produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphOrientation {
    /// `{w = f(z)}`
    WOfZ,
    /// `{z = f(w)}`
    ZOfW,
}

/// Graph of an iterated polynomial `f = Q^power`, evaluated by iteration so
/// that high powers never need their (ill-conditioned) expanded coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyGraph {
    q: Vec<C64>,
    power: u32,
    orientation: GraphOrientation,
}

impl PolyGraph {
    /// `q` holds ascending coefficients; the top one must be nonzero.
    pub fn new(q: Vec<C64>, power: u32, orientation: GraphOrientation) -> Result<Self> {
        if q.len() < 2 || q.last().is_none_or(|c| c.norm() == 0.0) {
            return Err(Error::InvalidInput(
                "polynomial needs degree >= 1 with nonzero leading coefficient".into(),
            ));
        }
        if power == 0 {
            return Err(Error::InvalidInput("power must be >= 1".into()));
        }
        Ok(PolyGraph {
            q,
            power,
            orientation,
        })
    }

    pub fn degree(&self) -> usize {
        self.q.len() - 1
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.q
    }

    /// One application of `Q`.
    pub fn step(&self, z: &ProjPoint) -> ProjPoint {
        poly_map(&self.q, z)
    }

    /// `Q^power(z)`.
    pub fn map(&self, z: &ProjPoint) -> ProjPoint {
        let mut p = *z;
        for _ in 0..self.power {
            p = self.step(&p);
        }
        p
    }

    /// `Q^-power(w)` with multiplicity.
    pub fn preimages(&self, w: &ProjPoint) -> Result<RootSet> {
        let d = self.degree();
        let mut level = vec![(*w, 1usize)];
        for _ in 0..self.power {
            let mut next = Vec::with_capacity(level.len() * d);
            for (p, m) in &level {
                if p.is_infinity() {
                    next.push((RootSet::single(ProjPoint::INFINITY, d), *m));
                    continue;
                }
                // w0 Q(x) - w1 as a form in x
                let mut c: Vec<C64> = self.q.iter().map(|k| k * p.a()).collect();
                c[0] -= p.b();
                next.push((roots_homogeneous(&HomUnivariate::new(c), DEFAULT_CLUSTER_RADIUS)?, *m));
            }
            level = RootSet::union(next, DEFAULT_CLUSTER_RADIUS).roots().to_vec();
        }
        Ok(RootSet::union(
            level.into_iter().map(|(p, m)| (RootSet::single(p, 1), m)),
            DEFAULT_CLUSTER_RADIUS,
        ))
    }

    /// Critical values of `Q^power`: orbits of the critical points of `Q`,
    /// plus infinity.
    pub fn critical_values_of_map(&self) -> Result<Vec<ProjPoint>> {
        let dq: Vec<C64> = self.q[1..]
            .iter()
            .enumerate()
            .map(|(k, c)| c * (k + 1) as f64)
            .collect();
        let mut out = vec![ProjPoint::INFINITY];
        if dq.len() >= 2 {
            let crit = roots_homogeneous(&HomUnivariate::new(dq), DEFAULT_CLUSTER_RADIUS)?;
            for (c, _) in crit.roots() {
                if c.is_infinity() {
                    continue;
                }
                let mut v = *c;
                for _ in 0..self.power {
                    v = self.step(&v);
                    out.push(v);
                }
            }
        }
        Ok(RootSet::union(
            out.into_iter().map(|p| (RootSet::single(p, 1), 1)),
            DEFAULT_CLUSTER_RADIUS,
        )
        .points()
        .copied()
        .collect())
    }

    fn map_degree(&self) -> u64 {
        (self.degree() as u64).pow(self.power)
    }
}

/// Polynomial map on the sphere, stable near infinity.
pub fn poly_map(q: &[C64], z: &ProjPoint) -> ProjPoint {
    if z.is_infinity() {
        return ProjPoint::INFINITY;
    }
    let d = q.len() - 1;
    let x = z.to_affine().unwrap();
    if x.norm() <= 1.0 {
        let mut acc = q[d];
        for k in (0..d).rev() {
            acc = acc * x + q[k];
        }
        ProjPoint::affine(acc)
    } else {
        // Q(x) = r(s) / s^d with s = 1/x
        let s = x.inv();
        let mut r = q[0];
        for k in 1..=d {
            r = r * s + q[k];
        }
        ProjPoint::new(s.powu(d as u32), r).unwrap_or(ProjPoint::INFINITY)
    }
}

impl Correspondence for PolyGraph {
    fn degrees(&self) -> DegreePair {
        match self.orientation {
            GraphOrientation::WOfZ => DegreePair {
                d0: 1,
                d1: self.map_degree(),
            },
            GraphOrientation::ZOfW => DegreePair {
                d0: self.map_degree(),
                d1: 1,
            },
        }
    }

    fn forward(&self, z: &ProjPoint) -> Result<RootSet> {
        match self.orientation {
            GraphOrientation::WOfZ => Ok(RootSet::single(self.map(z), 1)),
            GraphOrientation::ZOfW => self.preimages(z),
        }
    }

    fn backward(&self, w: &ProjPoint) -> Result<RootSet> {
        match self.orientation {
            GraphOrientation::WOfZ => self.preimages(w),
            GraphOrientation::ZOfW => Ok(RootSet::single(self.map(w), 1)),
        }
    }

    fn residual(&self, z: &ProjPoint, w: &ProjPoint) -> f64 {
        match self.orientation {
            GraphOrientation::WOfZ => chordal_distance(&self.map(z), w),
            GraphOrientation::ZOfW => chordal_distance(&self.map(w), z),
        }
    }

    fn critical_values(&self) -> Result<Vec<ProjPoint>> {
        match self.orientation {
            GraphOrientation::WOfZ => self.critical_values_of_map(),
            GraphOrientation::ZOfW => Ok(Vec::new()),
        }
    }
}

/// Formal sum of correspondences of any kind.
pub struct CorrespondenceSum {
    parts: Vec<Box<dyn Correspondence>>,
}

impl CorrespondenceSum {
    pub fn new(parts: Vec<Box<dyn Correspondence>>) -> Self {
        CorrespondenceSum { parts }
    }

    pub fn parts(&self) -> &[Box<dyn Correspondence>] {
        &self.parts
    }
}

impl Correspondence for CorrespondenceSum {
    fn degrees(&self) -> DegreePair {
        self.parts.iter().fold(DegreePair { d0: 0, d1: 0 }, |acc, p| {
            let d = p.degrees();
            DegreePair {
                d0: acc.d0 + d.d0,
                d1: acc.d1 + d.d1,
            }
        })
    }

    fn forward(&self, z: &ProjPoint) -> Result<RootSet> {
        let sets = self
            .parts
            .iter()
            .map(|p| p.forward(z).map(|r| (r, 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RootSet::union(sets, DEFAULT_CLUSTER_RADIUS))
    }

    fn backward(&self, w: &ProjPoint) -> Result<RootSet> {
        let sets = self
            .parts
            .iter()
            .map(|p| p.backward(w).map(|r| (r, 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RootSet::union(sets, DEFAULT_CLUSTER_RADIUS))
    }

    fn residual(&self, z: &ProjPoint, w: &ProjPoint) -> f64 {
        self.parts
            .iter()
            .map(|p| p.residual(z, w))
            .fold(f64::INFINITY, f64::min)
    }

    fn critical_values(&self) -> Result<Vec<ProjPoint>> {
        let mut sets = Vec::new();
        for p in &self.parts {
            for v in p.critical_values()? {
                sets.push((RootSet::single(v, 1), 1));
            }
        }
        Ok(RootSet::union(sets, DEFAULT_CLUSTER_RADIUS)
            .points()
            .copied()
            .collect())
    }
}
