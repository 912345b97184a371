//! Roots of binary forms on the projective line, with multiplicities assigned
//! by chordal clustering.

use crate::poly::{HomUnivariate, TRIM_TOL};
use crate::sphere::{chordal_distance, Chart, ProjPoint, C64};
use crate::Result;

pub const DEFAULT_CLUSTER_RADIUS: f64 = 1e-6;

const MAX_ITERS: usize = 500;

/// Distinct roots with multiplicities. Multiplicities add up to the formal
/// degree of the form they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RootSet {
    roots: Vec<(ProjPoint, usize)>,
}

impl RootSet {
    pub fn empty() -> Self {
        RootSet { roots: Vec::new() }
    }

    pub fn single(p: ProjPoint, mult: usize) -> Self {
        RootSet {
            roots: vec![(p, mult)],
        }
    }

    pub fn roots(&self) -> &[(ProjPoint, usize)] {
        &self.roots
    }

    pub fn total_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.1).sum()
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &ProjPoint> {
        self.roots.iter().map(|r| &r.0)
    }

    /// Root nearest to `p` in the chordal metric.
    pub fn nearest(&self, p: &ProjPoint) -> Option<(ProjPoint, f64)> {
        self.roots
            .iter()
            .map(|(q, _)| (*q, chordal_distance(p, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Multiplicity-weighted union; coincident points (within `radius`) merge.
    pub fn union(sets: impl IntoIterator<Item = (RootSet, usize)>, radius: f64) -> RootSet {
        let mut all = Vec::new();
        for (s, scale) in sets {
            all.extend(s.roots.into_iter().map(|(p, m)| (p, m * scale)));
        }
        cluster(all, radius)
    }
}

/// Roots of `p` on the projective line.
///
/// Leading coefficients below the trim threshold count as roots at infinity,
/// exact trailing zeros as roots at 0; the rest is solved by Aberth–Ehrlich
/// simultaneous iteration and clustered within `cluster_radius`.
pub fn roots_homogeneous(p: &HomUnivariate, cluster_radius: f64) -> Result<RootSet> {
    let p = p.normalized()?;
    let c = p.coeffs();
    let d = p.degree();
    let mut hi = d;
    while hi > 0 && c[hi].norm() <= TRIM_TOL {
        hi -= 1;
    }
    let at_inf = d - hi;
    let mut lo = 0;
    while lo < hi && c[lo] == C64::new(0.0, 0.0) {
        lo += 1;
    }
    let mut found: Vec<(ProjPoint, usize)> = Vec::with_capacity(d);
    if at_inf > 0 {
        found.push((ProjPoint::INFINITY, at_inf));
    }
    if lo > 0 {
        found.push((ProjPoint::ZERO, lo));
    }
    let q = &c[lo..=hi];
    match q.len() - 1 {
        0 => {}
        1 => found.push((ProjPoint::new(q[1], -q[0]).unwrap_or(ProjPoint::ZERO), 1)),
        2 => {
            for r in quadratic(q) {
                found.push((r, 1));
            }
        }
        _ => {
            for z in aberth(q) {
                found.push((ProjPoint::affine(z), 1));
            }
        }
    }
    Ok(cluster(found, cluster_radius))
}

/// Cancellation-free quadratic formula.
fn quadratic(q: &[C64]) -> [ProjPoint; 2] {
    let (c, b, a) = (q[0], q[1], q[2]);
    let disc = (b * b - a * c * 4.0).sqrt();
    let sgn = if (b.conj() * disc).re >= 0.0 { 1.0 } else { -1.0 };
    let t = -(b + disc * sgn) * 0.5;
    if t.norm() == 0.0 {
        // b = 0 and c = 0 was excluded, so this is a = ... double root at 0
        return [ProjPoint::ZERO, ProjPoint::ZERO];
    }
    // roots t / a and c / t, kept projective so nothing overflows
    let r1 = ProjPoint::new(a, t).unwrap_or(ProjPoint::INFINITY);
    let r2 = ProjPoint::new(t, c).unwrap_or(ProjPoint::ZERO);
    [r1, r2]
}

/// Newton correction `p / p'` evaluated stably on both sides of the unit circle.
fn newton_step(q: &[C64], z: C64) -> C64 {
    let m = q.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = q[m];
        let mut dp = C64::new(0.0, 0.0);
        for k in (0..m).rev() {
            dp = dp * z + p;
            p = p * z + q[k];
        }
        p / dp
    } else {
        // reversed polynomial r(y) = y^m p(1/y)
        let y = z.inv();
        let mut r = q[0];
        let mut dr = C64::new(0.0, 0.0);
        for k in 1..=m {
            dr = dr * y + r;
            r = r * y + q[k];
        }
        r / (y * (r * m as f64 - y * dr))
    }
}

fn aberth(q: &[C64]) -> Vec<C64> {
    let m = q.len() - 1;
    let lead = q[m].norm();
    let ratio = q[..m].iter().map(|c| c.norm() / lead).fold(0.0, f64::max);
    let radius = ratio.powf(1.0 / m as f64).max(f64::MIN_POSITIVE);
    let mut z: Vec<C64> = (0..m)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / m as f64 + 0.4;
            C64::from_polar(radius, ang)
        })
        .collect();
    let mut done = vec![false; m];
    for _ in 0..MAX_ITERS {
        let mut all_done = true;
        for i in 0..m {
            if done[i] {
                continue;
            }
            let n = newton_step(q, z[i]);
            let s: C64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let w = n / (C64::new(1.0, 0.0) - n * s);
            if !w.is_finite() {
                continue;
            }
            z[i] -= w;
            if w.norm() <= 4.0 * f64::EPSILON * z[i].norm().max(1.0) {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
    z
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut k = i;
    while parent[k] != r {
        let next = parent[k];
        parent[k] = r;
        k = next;
    }
    r
}

/// Merges points within `radius`, averaging in the chart of the first member,
/// until cluster centers are pairwise separated. Output is sorted.
fn cluster(mut pts: Vec<(ProjPoint, usize)>, radius: f64) -> RootSet {
    loop {
        let n = pts.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut merged = false;
        for i in 0..n {
            for j in i + 1..n {
                if chordal_distance(&pts[i].0, &pts[j].0) <= radius {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[b.max(a)] = a.min(b);
                        merged = true;
                    }
                }
            }
        }
        if !merged {
            break;
        }
        let mut groups: Vec<(usize, Vec<(ProjPoint, usize)>)> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            match groups.iter_mut().find(|g| g.0 == r) {
                Some(g) => g.1.push(pts[i]),
                None => groups.push((r, vec![pts[i]])),
            }
        }
        pts = groups
            .into_iter()
            .map(|(_, g)| {
                let chart = g[0].0.chart();
                let total: usize = g.iter().map(|x| x.1).sum();
                let mut acc = C64::new(0.0, 0.0);
                for (p, m) in &g {
                    acc += coord_in(p, chart) * *m as f64;
                }
                (ProjPoint::from_chart(chart, acc / total as f64), total)
            })
            .collect();
    }
    pts.sort_by(|a, b| {
        let (ca, sa) = a.0.chart_coord();
        let (cb, sb) = b.0.chart_coord();
        ca.cmp(&cb)
            .then(sa.re.total_cmp(&sb.re))
            .then(sa.im.total_cmp(&sb.im))
    });
    RootSet { roots: pts }
}

/// Coordinate of `p` in the given chart (finite for points near that chart).
fn coord_in(p: &ProjPoint, chart: Chart) -> C64 {
    match chart {
        Chart::Zero => p.b() / p.a(),
        Chart::One => p.a() / p.b(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Form with the given roots (projective, with multiplicity).
    fn from_roots(roots: &[ProjPoint]) -> HomUnivariate {
        let mut coeffs = vec![c(1.0)];
        for r in roots {
            // multiply by (a x1 - b x0)
            let mut next = vec![c(0.0); coeffs.len() + 1];
            for (k, &ck) in coeffs.iter().enumerate() {
                next[k] += -r.b() * ck;
                next[k + 1] += r.a() * ck;
            }
            coeffs = next;
        }
        HomUnivariate::new(coeffs)
    }

    #[test]
    fn examples() {
        let p = HomUnivariate::new(vec![c(-1.0), c(0.0), c(1.0)]);
        let r = roots_homogeneous(&p, DEFAULT_CLUSTER_RADIUS).unwrap();
        assert_eq!(r.len(), 2);
        let mut re: Vec<f64> = r.points().map(|p| p.to_affine().unwrap().re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-14 && (re[1] - 1.0).abs() < 1e-14);

        let sq = HomUnivariate::new(vec![c(0.0), c(0.0), c(1.0)]);
        let r = roots_homogeneous(&sq, DEFAULT_CLUSTER_RADIUS).unwrap();
        assert_eq!(r.roots(), &[(ProjPoint::ZERO, 2)]);

        let mixed = HomUnivariate::new(vec![c(0.0), c(1.0), c(0.0)]);
        let r = roots_homogeneous(&mixed, DEFAULT_CLUSTER_RADIUS).unwrap();
        assert_eq!(r.roots(), &[(ProjPoint::ZERO, 1), (ProjPoint::INFINITY, 1)]);

        let zero = HomUnivariate::new(vec![c(0.0), c(0.0)]);
        assert_eq!(
            roots_homogeneous(&zero, DEFAULT_CLUSTER_RADIUS),
            Err(Error::ZeroPolynomial)
        );
    }

    #[test]
    fn constant_form_has_no_roots() {
        let r = roots_homogeneous(&HomUnivariate::new(vec![c(3.0)]), 1e-6).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn high_degree_cyclotomic() {
        let mut coeffs = vec![c(0.0); 13];
        coeffs[0] = c(-1.0);
        coeffs[12] = c(1.0);
        let r = roots_homogeneous(&HomUnivariate::new(coeffs.clone()), 1e-6).unwrap();
        assert_eq!(r.len(), 12);
        let p = HomUnivariate::new(coeffs);
        for (z, m) in r.roots() {
            assert_eq!(*m, 1);
            assert!(p.eval(z).norm() < 1e-12);
        }
    }

    fn arb_root() -> impl Strategy<Value = ProjPoint> {
        prop_oneof![
            8 => (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| ProjPoint::affine(C64::new(a, b))),
            1 => Just(ProjPoint::INFINITY),
            1 => Just(ProjPoint::ZERO),
        ]
    }

    fn separated(roots: &[ProjPoint], sep: f64) -> bool {
        roots
            .iter()
            .enumerate()
            .all(|(i, p)| roots[i + 1..].iter().all(|q| chordal_distance(p, q) >= sep))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn reconstructs_planted_roots(roots in proptest::collection::vec(arb_root(), 1..=10)) {
            prop_assume!(separated(&roots, 0.05));
            let p = from_roots(&roots);
            let got = roots_homogeneous(&p, DEFAULT_CLUSTER_RADIUS).unwrap();
            prop_assert_eq!(got.total_multiplicity(), roots.len());
            prop_assert_eq!(got.len(), roots.len());
            for r in &roots {
                let (_, d) = got.nearest(r).unwrap();
                prop_assert!(d <= 1e-7, "planted {:?} missed by {}", r, d);
            }
            let pn = p.normalized().unwrap();
            for (z, _) in got.roots() {
                prop_assert!(pn.eval(z).norm() <= 1e-7);
            }
        }

        #[test]
        fn multiplicity_is_conserved(
            roots in proptest::collection::vec(arb_root(), 1..=4),
            reps in proptest::collection::vec(1usize..=3, 4),
        ) {
            let mut planted = Vec::new();
            for (r, k) in roots.iter().zip(reps.iter()) {
                for _ in 0..*k {
                    planted.push(*r);
                }
            }
            let got = roots_homogeneous(&from_roots(&planted), DEFAULT_CLUSTER_RADIUS).unwrap();
            prop_assert_eq!(got.total_multiplicity(), planted.len());
        }

        #[test]
        fn scale_invariant(roots in proptest::collection::vec(arb_root(), 1..=8), e in -6.0f64..6.0, ph in 0.0f64..std::f64::consts::TAU) {
            let p = from_roots(&roots);
            let lambda = C64::from_polar(10f64.powf(e), ph);
            let q = HomUnivariate::new(p.coeffs().iter().map(|c| c * lambda).collect());
            let a = roots_homogeneous(&p, DEFAULT_CLUSTER_RADIUS).unwrap();
            let b = roots_homogeneous(&q, DEFAULT_CLUSTER_RADIUS).unwrap();
            prop_assert_eq!(a.total_multiplicity(), b.total_multiplicity());
            for (z, _) in a.roots() {
                prop_assert!(b.nearest(z).unwrap().1 <= 1e-9);
            }
        }
    }
}
