//! Riemann-sphere geometry: projective points, the chordal metric, the
//! Fubini–Study area density and the two-chart atlas grid shared by the
//! relation and measure code.
//!
//! A point `[a : b]` has affine coordinate `z = b / a`, so `[0 : 1]` is the
//! point at infinity. Chart 0 carries `z` on `|z| <= 1`, chart 1 carries
//! `1 / z` on `|z| > 1`. Each chart is an `n x n` grid on `[-1, 1]^2` pulled
//! over the closed unit disk by the concentric (equal-area) square-to-disk map.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

/// Default chordal tolerance for point equality.
pub const POINT_EQ_TOL: f64 = 1e-9;

/// Relative slack for deciding `|a| == |b|` during normalization.
const TIE_TOL: f64 = 1e-12;

/// A point of the projective line in canonical form.
///
/// The larger-modulus coordinate is exactly `1 + 0i`; on ties coordinate 0 is
/// the pivot. Equality via `==` is bitwise on the canonical coordinates, use
/// [`ProjPoint::approx_eq`] for geometric comparison.
#[derive(Clone, Copy, PartialEq)]
pub struct ProjPoint {
    a: C64,
    b: C64,
}

impl fmt::Debug for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_affine() {
            Some(z) => write!(f, "P({}{:+}i)", z.re, z.im),
            None => write!(f, "P(inf)"),
        }
    }
}

impl ProjPoint {
    pub const ZERO: ProjPoint = ProjPoint {
        a: C64::new(1.0, 0.0),
        b: C64::new(0.0, 0.0),
    };
    pub const INFINITY: ProjPoint = ProjPoint {
        a: C64::new(0.0, 0.0),
        b: C64::new(1.0, 0.0),
    };

    /// Builds `[a : b]`, returning `None` when both coordinates vanish or
    /// anything is non-finite.
    pub fn new(a: C64, b: C64) -> Option<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        let (ma, mb) = (a.norm(), b.norm());
        if ma == 0.0 && mb == 0.0 {
            return None;
        }
        Some(Self::normalize(a, b, ma, mb))
    }

    fn normalize(a: C64, b: C64, ma: f64, mb: f64) -> Self {
        let one = C64::new(1.0, 0.0);
        if mb > ma * (1.0 + TIE_TOL) {
            let a = if b == one { a } else { a / b };
            ProjPoint { a: clean(a), b: one }
        } else {
            let b = if a == one { b } else { b / a };
            ProjPoint { a: one, b: clean(b) }
        }
    }

    /// The point `[1 : z]`. Non-finite input maps to infinity.
    pub fn affine(z: C64) -> Self {
        if !z.is_finite() {
            return Self::INFINITY;
        }
        Self::new(C64::new(1.0, 0.0), z).unwrap_or(Self::INFINITY)
    }

    pub fn real(x: f64) -> Self {
        Self::affine(C64::new(x, 0.0))
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn b(&self) -> C64 {
        self.b
    }

    pub fn is_infinity(&self) -> bool {
        self.a == C64::new(0.0, 0.0)
    }

    /// Affine coordinate `b / a`, `None` at infinity.
    pub fn to_affine(&self) -> Option<C64> {
        if self.is_infinity() {
            None
        } else if self.a == C64::new(1.0, 0.0) {
            Some(self.b)
        } else {
            Some(self.b / self.a)
        }
    }

    /// Affine coordinate with infinity mapped to a complex infinity.
    pub fn affine_or_inf(&self) -> C64 {
        self.to_affine()
            .unwrap_or(C64::new(f64::INFINITY, 0.0))
    }

    pub fn chart(&self) -> Chart {
        if self.a == C64::new(1.0, 0.0) {
            Chart::Zero
        } else {
            Chart::One
        }
    }

    /// Chart and chart coordinate (modulus at most 1).
    pub fn chart_coord(&self) -> (Chart, C64) {
        match self.chart() {
            Chart::Zero => (Chart::Zero, self.b),
            Chart::One => (Chart::One, self.a),
        }
    }

    pub fn from_chart(chart: Chart, s: C64) -> Self {
        match chart {
            Chart::Zero => Self::new(C64::new(1.0, 0.0), s).unwrap_or(Self::INFINITY),
            Chart::One => Self::new(s, C64::new(1.0, 0.0)).unwrap_or(Self::ZERO),
        }
    }

    /// Euclidean norm of the canonical representative.
    pub fn norm(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr()).sqrt()
    }

    pub fn approx_eq(&self, other: &ProjPoint, tol: f64) -> bool {
        chordal_distance(self, other) <= tol
    }

    /// Position on the unit sphere in R^3, with infinity at the north pole.
    pub fn to_sphere(&self) -> [f64; 3] {
        let n2 = self.a.norm_sqr() + self.b.norm_sqr();
        let w = self.b * self.a.conj();
        [
            2.0 * w.re / n2,
            2.0 * w.im / n2,
            (self.b.norm_sqr() - self.a.norm_sqr()) / n2,
        ]
    }

    pub fn from_sphere(p: [f64; 3]) -> Self {
        let [x, y, h] = p;
        if h <= 0.0 {
            Self::new(C64::new(1.0 - h, 0.0), C64::new(x, y)).unwrap_or(Self::ZERO)
        } else {
            Self::new(C64::new(x, -y), C64::new(1.0 + h, 0.0)).unwrap_or(Self::INFINITY)
        }
    }

    /// Point on the Fubini–Study geodesic from `self` (t = 0) to `other` (t = 1).
    pub fn lerp(&self, other: &ProjPoint, t: f64) -> ProjPoint {
        let (n1, n2) = (self.norm(), other.norm());
        let (a1, b1) = (self.a / n1, self.b / n1);
        let (mut a2, mut b2) = (other.a / n2, other.b / n2);
        let inner = a1.conj() * a2 + b1.conj() * b2;
        if inner.norm() > 0.0 {
            let phase = inner.conj() / inner.norm();
            a2 *= phase;
            b2 *= phase;
        }
        let a = a1 * (1.0 - t) + a2 * t;
        let b = b1 * (1.0 - t) + b2 * t;
        ProjPoint::new(a, b).unwrap_or(*self)
    }

    /// Wire form `[re_a, im_a, re_b, im_b]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.a.re, self.a.im, self.b.re, self.b.im]
    }

    /// Accepts the full form or the affine shorthand `[re, im]`.
    pub fn from_slice(v: &[f64]) -> Option<Self> {
        match v {
            [re, im] => Some(Self::affine(C64::new(*re, *im))),
            [ar, ai, br, bi] => Self::new(C64::new(*ar, *ai), C64::new(*br, *bi)),
            _ => None,
        }
    }
}

fn clean(z: C64) -> C64 {
    // canonical zeros are +0.0 so that hashing and bitwise comparison agree
    C64::new(z.re + 0.0, z.im + 0.0)
}

impl Serialize for ProjPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        ProjPoint::from_slice(&v).ok_or_else(|| {
            serde::de::Error::custom("expected [re, im] or [re_a, im_a, re_b, im_b], not both zero")
        })
    }
}

/// Chordal distance normalized to diameter 1.
pub fn chordal_distance(p: &ProjPoint, q: &ProjPoint) -> f64 {
    let num = (p.a * q.b - p.b * q.a).norm();
    (num / (p.norm() * q.norm())).min(1.0)
}

/// Fubini–Study area density per unit Lebesgue area of the affine chart.
pub fn fs_density(z: C64) -> f64 {
    let r2 = z.norm_sqr();
    1.0 / (PI * (1.0 + r2) * (1.0 + r2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chart {
    Zero,
    One,
}

impl Chart {
    pub fn index(self) -> usize {
        match self {
            Chart::Zero => 0,
            Chart::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Chart {
        if i == 0 {
            Chart::Zero
        } else {
            Chart::One
        }
    }
}

/// Concentric map from `[-1, 1]^2` onto the closed unit disk.
pub fn square_to_disk(u: f64, v: f64) -> C64 {
    if u == 0.0 && v == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let (r, phi) = if u.abs() >= v.abs() {
        (u, FRAC_PI_4 * (v / u))
    } else {
        (v, FRAC_PI_2 - FRAC_PI_4 * (u / v))
    };
    C64::new(r * phi.cos(), r * phi.sin())
}

/// Inverse of [`square_to_disk`]; input is clamped to the unit disk.
pub fn disk_to_square(s: C64) -> (f64, f64) {
    let r = s.norm().min(1.0);
    let (x, y) = (s.re, s.im);
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let k = 4.0 / PI;
    if x.abs() >= y.abs() {
        let sg = x.signum();
        (sg * r, sg * r * k * (y / x).atan())
    } else {
        let sg = y.signum();
        (sg * r * k * (x / y).atan(), sg * r)
    }
}

/// A cell of the atlas grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub chart: Chart,
    pub i: usize,
    pub j: usize,
}

/// Two-chart atlas grid with precomputed FS cell masses and adjacency.
///
/// Cheap to clone; the tables live behind an `Arc`.
#[derive(Clone)]
pub struct AtlasGrid {
    inner: Arc<GridTables>,
}

struct GridTables {
    n: usize,
    /// FS mass per cell of one chart (both charts are identical).
    chart_mass: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    max_diameter: f64,
}

impl fmt::Debug for AtlasGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AtlasGrid({})", self.inner.n)
    }
}

impl PartialEq for AtlasGrid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n
    }
}

impl AtlasGrid {
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "grid resolution must be positive");
        let chart_mass = (0..n * n)
            .map(|k| cell_mass(n, k / n, k % n))
            .collect::<Vec<_>>();
        let neighbors = build_neighbors(n);
        let mut grid = AtlasGrid {
            inner: Arc::new(GridTables {
                n,
                chart_mass,
                neighbors,
                max_diameter: 0.0,
            }),
        };
        let diam = (0..n * n)
            .map(|k| grid.cell_diameter(k))
            .fold(0.0, f64::max);
        Arc::get_mut(&mut grid.inner).unwrap().max_diameter = diam;
        grid
    }

    pub fn resolution(&self) -> usize {
        self.inner.n
    }

    pub fn num_cells(&self) -> usize {
        2 * self.inner.n * self.inner.n
    }

    pub fn index(&self, c: CellId) -> usize {
        let n = self.inner.n;
        c.chart.index() * n * n + c.i * n + c.j
    }

    pub fn cell(&self, idx: usize) -> CellId {
        let n = self.inner.n;
        let chart = Chart::from_index(idx / (n * n));
        let k = idx % (n * n);
        CellId {
            chart,
            i: k / n,
            j: k % n,
        }
    }

    /// Square-coordinate bounds `(u_lo, u_hi, v_lo, v_hi)` of a cell.
    pub fn cell_bounds(&self, idx: usize) -> (f64, f64, f64, f64) {
        let c = self.cell(idx);
        let h = 2.0 / self.inner.n as f64;
        let u0 = -1.0 + h * c.i as f64;
        let v0 = -1.0 + h * c.j as f64;
        (u0, u0 + h, v0, v0 + h)
    }

    pub fn locate(&self, p: &ProjPoint) -> usize {
        let (chart, s) = p.chart_coord();
        let (u, v) = disk_to_square(s);
        let n = self.inner.n;
        let i = axis_index(u, n);
        let j = axis_index(v, n);
        self.index(CellId { chart, i, j })
    }

    pub fn point_at(&self, chart: Chart, u: f64, v: f64) -> ProjPoint {
        ProjPoint::from_chart(chart, square_to_disk(u, v))
    }

    pub fn center(&self, idx: usize) -> ProjPoint {
        let (u0, u1, v0, v1) = self.cell_bounds(idx);
        self.point_at(self.cell(idx).chart, 0.5 * (u0 + u1), 0.5 * (v0 + v1))
    }

    /// Center in square coordinates.
    pub fn center_uv(&self, idx: usize) -> (f64, f64) {
        let (u0, u1, v0, v1) = self.cell_bounds(idx);
        (0.5 * (u0 + u1), 0.5 * (v0 + v1))
    }

    /// `k x k` lattice of sample points including the corners, where
    /// `k = max(2, ceil(sqrt(count)))`.
    pub fn samples(&self, idx: usize, count: usize) -> Vec<ProjPoint> {
        let k = ((count as f64).sqrt().ceil() as usize).max(2);
        let (u0, u1, v0, v1) = self.cell_bounds(idx);
        let chart = self.cell(idx).chart;
        let mut out = Vec::with_capacity(k * k);
        for a in 0..k {
            let u = u0 + (u1 - u0) * a as f64 / (k - 1) as f64;
            for b in 0..k {
                let v = v0 + (v1 - v0) * b as f64 / (k - 1) as f64;
                out.push(self.point_at(chart, u, v));
            }
        }
        out
    }

    /// FS mass of a cell; all masses sum to 1.
    pub fn cell_area(&self, idx: usize) -> f64 {
        let n = self.inner.n;
        self.inner.chart_mass[idx % (n * n)]
    }

    /// 1-ring neighbors, including cross-chart neighbors along `|z| = 1`.
    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.inner.neighbors[idx]
    }

    /// Largest chordal distance between sample points of a cell.
    pub fn cell_diameter(&self, idx: usize) -> f64 {
        let pts = self.samples(idx, 9);
        let mut d: f64 = 0.0;
        for p in &pts {
            for q in &pts {
                d = d.max(chordal_distance(p, q));
            }
        }
        d
    }

    pub fn max_cell_diameter(&self) -> f64 {
        self.inner.max_diameter
    }

    /// Bilinear stencil over cell centers of the point's own chart, clamped at
    /// the chart edge. Weights are nonnegative and sum to 1.
    pub fn bilinear_stencil(&self, p: &ProjPoint) -> [(usize, f64); 4] {
        let (chart, s) = p.chart_coord();
        let (u, v) = disk_to_square(s);
        let n = self.inner.n;
        let (i0, tu) = stencil_axis(u, n);
        let (j0, tv) = stencil_axis(v, n);
        let i1 = (i0 + 1).min(n - 1);
        let j1 = (j0 + 1).min(n - 1);
        let id = |i, j| self.index(CellId { chart, i, j });
        [
            (id(i0, j0), (1.0 - tu) * (1.0 - tv)),
            (id(i1, j0), tu * (1.0 - tv)),
            (id(i0, j1), (1.0 - tu) * tv),
            (id(i1, j1), tu * tv),
        ]
    }
}

fn axis_index(u: f64, n: usize) -> usize {
    let t = ((u + 1.0) * 0.5 * n as f64).floor();
    if t < 0.0 {
        0
    } else {
        (t as usize).min(n - 1)
    }
}

fn stencil_axis(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let x = (u + 1.0) * 0.5 * n as f64 - 0.5;
    let i0 = x.floor().clamp(0.0, (n - 2) as f64);
    let t = (x - i0).clamp(0.0, 1.0);
    (i0 as usize, t)
}

/// Antiderivative of `1 / (1 + u^2)^2`.
fn prim_flat(u: f64) -> f64 {
    u / (2.0 * (1.0 + u * u)) + 0.5 * u.atan()
}

/// Antiderivative of `u / (1 + u^2)^2`.
fn prim_lin(u: f64) -> f64 {
    -0.5 / (1.0 + u * u)
}

/// FS mass of the rectangle `[u1,u2] x [v1,v2]` intersected with the east
/// sector `|v| <= u` of the concentric map.
fn east_mass(u1: f64, u2: f64, v1: f64, v2: f64) -> f64 {
    let lo = u1.max(0.0);
    let hi = u2;
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for b in [v1.abs(), v2.abs()] {
        if b > lo && b < hi {
            cuts.push(b);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let mid = 0.5 * (x0 + x1);
        // len(u) = min(v2, u) - max(v1, -u) = a + b u on this piece
        let (ua, ub) = if v2 < mid { (v2, 0.0) } else { (0.0, 1.0) };
        let (la, lb) = if v1 > -mid { (v1, 0.0) } else { (0.0, -1.0) };
        let (a, b) = (ua - la, ub - lb);
        if a + b * mid <= 0.0 {
            continue;
        }
        total += (a * (prim_flat(x1) - prim_flat(x0)) + b * (prim_lin(x1) - prim_lin(x0))) / 4.0;
    }
    total
}

fn cell_mass(n: usize, i: usize, j: usize) -> f64 {
    let h = 2.0 / n as f64;
    let (mut u1, mut u2) = (-1.0 + h * i as f64, -1.0 + h * (i + 1) as f64);
    let (mut v1, mut v2) = (-1.0 + h * j as f64, -1.0 + h * (j + 1) as f64);
    let mut total = 0.0;
    for _ in 0..4 {
        total += east_mass(u1, u2, v1, v2);
        // rotate the square by -90 degrees: (u, v) -> (v, -u)
        let (nu1, nu2, nv1, nv2) = (v1, v2, -u2, -u1);
        u1 = nu1;
        u2 = nu2;
        v1 = nv1;
        v2 = nv2;
    }
    total
}

fn build_neighbors(n: usize) -> Vec<Vec<usize>> {
    let nn = n * n;
    let mut out = vec![Vec::with_capacity(9); 2 * nn];
    for chart in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let idx = chart * nn + i * n + j;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n {
                            out[idx].push(chart * nn + a as usize * n + b as usize);
                        }
                    }
                }
            }
        }
    }
    // Seam: boundary edges of both charts cut the unit circle into 4n equal
    // arcs starting at angle -pi/4. Chart 1 angles are negated under z -> 1/z.
    let segs = 4 * n;
    let arc = 2.0 * PI / segs as f64;
    let mut seg_cell = [vec![usize::MAX; segs], vec![usize::MAX; segs]];
    let h = 2.0 / n as f64;
    for chart in 0..2 {
        for k in 0..n {
            let m = -1.0 + h * (k as f64 + 0.5);
            // (u, v, i, j) of the edge midpoint and its owning cell
            let edges = [
                (1.0, m, n - 1, k),
                (-1.0, m, 0, k),
                (m, 1.0, k, n - 1),
                (m, -1.0, k, 0),
            ];
            for (u, v, i, j) in edges {
                let mut theta = square_to_disk(u, v).arg();
                if chart == 1 {
                    theta = -theta;
                }
                let t = (theta + FRAC_PI_4).rem_euclid(2.0 * PI) / arc;
                let s = (t.floor() as usize) % segs;
                seg_cell[chart][s] = chart * nn + i * n + j;
            }
        }
    }
    for s in 0..segs {
        let c0 = seg_cell[0][s];
        for d in [segs - 1, 0, 1] {
            let c1 = seg_cell[1][(s + d) % segs];
            if !out[c0].contains(&c1) {
                out[c0].push(c1);
            }
            if !out[c1].contains(&c0) {
                out[c1].push(c0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(re: f64, im: f64) -> ProjPoint {
        ProjPoint::affine(C64::new(re, im))
    }

    #[test]
    fn chordal_examples() {
        assert!((chordal_distance(&ProjPoint::ZERO, &ProjPoint::INFINITY) - 1.0).abs() < 1e-15);
        let z = pt(0.3, -2.0);
        assert_eq!(chordal_distance(&z, &z), 0.0);
        assert!((chordal_distance(&pt(1.0, 0.0), &pt(-1.0, 0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fs_density_examples() {
        assert!((fs_density(C64::new(0.0, 0.0)) - 1.0 / PI).abs() < 1e-15);
        assert!((fs_density(C64::new(1.0, 0.0)) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        // integral over the unit disk in polar coordinates by midpoint rule
        let m = 20000;
        let dr = 1.0 / m as f64;
        let disk: f64 = (0..m)
            .map(|k| {
                let r = (k as f64 + 0.5) * dr;
                2.0 * PI * r * fs_density(C64::new(r, 0.0)) * dr
            })
            .sum();
        assert!((disk - 0.5).abs() < 1e-8);
    }

    #[test]
    fn normalization_and_tie_break() {
        let p = ProjPoint::new(C64::new(0.0, 2.0), C64::new(0.0, -2.0)).unwrap();
        assert_eq!(p.a(), C64::new(1.0, 0.0));
        assert_eq!(p.chart(), Chart::Zero);
        let q = ProjPoint::new(C64::new(0.0, 0.5), C64::new(3.0, 0.0)).unwrap();
        assert_eq!(q.b(), C64::new(1.0, 0.0));
        assert!(ProjPoint::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0)).is_none());
    }

    #[test]
    fn locate_examples() {
        let g = AtlasGrid::new(16);
        let c0 = g.cell(g.locate(&ProjPoint::ZERO));
        assert_eq!(c0, CellId { chart: Chart::Zero, i: 8, j: 8 });
        let c1 = g.cell(g.locate(&ProjPoint::INFINITY));
        assert_eq!(c1, CellId { chart: Chart::One, i: 8, j: 8 });
        let on_circle = ProjPoint::affine(C64::from_polar(1.0, 0.7));
        assert_eq!(g.cell(g.locate(&on_circle)).chart, Chart::Zero);
        assert_eq!(g.cell(g.locate(&pt(-1.0, 0.0))).chart, Chart::Zero);
    }

    #[test]
    fn areas_sum_to_one() {
        for n in [16, 64, 256] {
            let g = AtlasGrid::new(n);
            let total: f64 = (0..g.num_cells()).map(|k| g.cell_area(k)).sum();
            assert!((total - 1.0).abs() < 1e-6, "n={n} total={total}");
        }
    }

    #[test]
    fn cell_area_matches_quadrature() {
        let g = AtlasGrid::new(8);
        for idx in [0, 9, 27, 36, 63] {
            let (u0, u1, v0, v1) = g.cell_bounds(idx);
            let m = 400;
            let mut acc = 0.0;
            for a in 0..m {
                for b in 0..m {
                    let u = u0 + (u1 - u0) * (a as f64 + 0.5) / m as f64;
                    let v = v0 + (v1 - v0) * (b as f64 + 0.5) / m as f64;
                    acc += fs_density(square_to_disk(u, v)) * PI / 4.0;
                }
            }
            acc *= (u1 - u0) * (v1 - v0) / (m * m) as f64;
            assert!((acc - g.cell_area(idx)).abs() < 1e-6 * g.cell_area(idx).max(1e-3));
        }
    }

    #[test]
    fn seam_neighbors_are_symmetric_and_close() {
        let g = AtlasGrid::new(16);
        for idx in 0..g.num_cells() {
            for &nb in g.neighbors(idx) {
                assert!(g.neighbors(nb).contains(&idx));
                let d = chordal_distance(&g.center(idx), &g.center(nb));
                assert!(d < 3.0 * g.max_cell_diameter(), "{idx} {nb} {d}");
            }
        }
        let boundary = g.locate(&pt(1.0, 0.0));
        assert!(g
            .neighbors(boundary)
            .iter()
            .any(|&k| g.cell(k).chart == Chart::One));
    }

    fn arb_point() -> impl Strategy<Value = ProjPoint> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter_map("nonzero", |(a, b, c, d)| {
                ProjPoint::new(C64::new(a, b), C64::new(c, d))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn metric_axioms(p in arb_point(), q in arb_point(), r in arb_point()) {
            let dpq = chordal_distance(&p, &q);
            prop_assert!((0.0..=1.0).contains(&dpq));
            prop_assert!((dpq - chordal_distance(&q, &p)).abs() < 1e-15);
            prop_assert!(dpq <= chordal_distance(&p, &r) + chordal_distance(&r, &q) + 1e-12);
        }

        #[test]
        fn normalization_is_idempotent(p in arb_point()) {
            let again = ProjPoint::new(p.a(), p.b()).unwrap();
            prop_assert_eq!(again.to_array().map(f64::to_bits), p.to_array().map(f64::to_bits));
        }

        #[test]
        fn locate_round_trips_through_center(p in arb_point()) {
            let g = AtlasGrid::new(32);
            let idx = g.locate(&p);
            prop_assert_eq!(g.locate(&g.center(idx)), idx);
            prop_assert!(chordal_distance(&p, &g.center(idx)) <= 2.0 * g.max_cell_diameter());
        }

        #[test]
        fn concentric_map_round_trip(u in -1.0f64..1.0, v in -1.0f64..1.0) {
            let (u2, v2) = disk_to_square(square_to_disk(u, v));
            prop_assert!((u - u2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
        }

        #[test]
        fn sphere_round_trip(p in arb_point()) {
            let q = ProjPoint::from_sphere(p.to_sphere());
            prop_assert!(chordal_distance(&p, &q) < 1e-12);
        }
    }
}
