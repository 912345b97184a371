//! Bihomogeneous polynomials on P^1 x P^1, their fibers, derivatives and the
//! resultant that eliminates a shared middle variable.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::sphere::{ProjPoint, C64};
use crate::{Error, Result};

/// Relative threshold separating a genuine degree drop from round-off.
pub const TRIM_TOL: f64 = 1e-10;

/// Below this (times the input scale) a fiber polynomial counts as zero.
const ZERO_FIBER_TOL: f64 = 1e-14;

/// Line-factor probes: a fiber below this size means a line component.
const LINE_FACTOR_TOL: f64 = 1e-8;

const PROBES: [(f64, f64); 5] = [
    (0.3, 0.7),
    (-1.1, 0.2),
    (0.05, -0.9),
    (2.3, 1.7),
    (-0.6, -0.4),
];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `sum c[i][j] z1^i z0^(dz-i) w1^j w0^(dw-j)`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BihomPoly {
    dz: usize,
    dw: usize,
    coeffs: Arc<[C64]>,
}

/// `sum c[k] x1^k x0^(d-k)` with formal degree `d = c.len() - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomUnivariate {
    coeffs: Vec<C64>,
}

impl HomUnivariate {
    /// Panics on an empty coefficient vector.
    pub fn new(coeffs: Vec<C64>) -> Self {
        assert!(!coeffs.is_empty(), "a form needs at least one coefficient");
        HomUnivariate { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, p: &ProjPoint) -> C64 {
        eval_form(&self.coeffs, p.a(), p.b())
    }

    /// Scaled to max-modulus 1; unchanged when already (nearly) there.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.max_modulus();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::ZeroPolynomial);
        }
        Ok(HomUnivariate {
            coeffs: self.coeffs.iter().map(|c| c / m).collect(),
        })
    }
}

/// Homogeneous Horner for `sum c[k] x1^k x0^(d-k)`.
fn eval_form(c: &[C64], x0: C64, x1: C64) -> C64 {
    let d = c.len() - 1;
    if x0.norm() >= x1.norm() {
        // x0^d * q(x1/x0)
        let t = x1 / x0;
        let mut acc = c[d];
        for k in (0..d).rev() {
            acc = acc * t + c[k];
        }
        acc * x0.powu(d as u32)
    } else {
        let t = x0 / x1;
        let mut acc = c[0];
        for k in 1..=d {
            acc = acc * t + c[k];
        }
        acc * x1.powu(d as u32)
    }
}

/// `p^k q^(d-k)` for k = 0..=d.
fn hom_powers(q: C64, p: C64, d: usize) -> Vec<C64> {
    let mut lo = vec![ONE; d + 1];
    let mut hi = vec![ONE; d + 1];
    for k in 1..=d {
        lo[k] = lo[k - 1] * q;
        hi[k] = hi[k - 1] * p;
    }
    (0..=d).map(|k| hi[k] * lo[d - k]).collect()
}

impl BihomPoly {
    /// Builds from rows `coeffs[i][j]`; trims to the exact bidegree and scales
    /// to max-modulus 1.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dz = rows
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::InvalidInput("no coefficient rows".into()))?;
        let dw = rows[0]
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::InvalidInput("empty coefficient row".into()))?;
        if rows.iter().any(|r| r.len() != dw + 1) {
            return Err(Error::InvalidInput("ragged coefficient matrix".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::assemble(dz, dw, flat, true)
    }

    /// Affine terms `(i, j, c)` meaning `c z^i w^j`.
    pub fn from_terms(terms: &[(usize, usize, C64)]) -> Result<Self> {
        let dz = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let dw = terms.iter().map(|t| t.1).max().unwrap_or(0);
        let mut flat = vec![ZERO; (dz + 1) * (dw + 1)];
        for &(i, j, c) in terms {
            flat[i * (dw + 1) + j] += c;
        }
        Self::assemble(dz, dw, flat, true)
    }

    /// Real-coefficient shorthand for tests and examples.
    pub fn from_real_terms(terms: &[(usize, usize, f64)]) -> Result<Self> {
        let t: Vec<_> = terms
            .iter()
            .map(|&(i, j, c)| (i, j, C64::new(c, 0.0)))
            .collect();
        Self::from_terms(&t)
    }

    fn assemble(dz: usize, dw: usize, flat: Vec<C64>, normalize: bool) -> Result<Self> {
        if flat.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let m = flat.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return Err(Error::ZeroPolynomial);
        }
        let cut = TRIM_TOL * m;
        let row_max = |i: usize| (0..=dw).map(|j| flat[i * (dw + 1) + j].norm()).fold(0.0, f64::max);
        let col_max = |j: usize, rows: usize| {
            (0..=rows)
                .map(|i| flat[i * (dw + 1) + j].norm())
                .fold(0.0, f64::max)
        };
        let mut ez = dz;
        while ez > 0 && row_max(ez) <= cut {
            ez -= 1;
        }
        let mut ew = dw;
        while ew > 0 && col_max(ew, ez) <= cut {
            ew -= 1;
        }
        let scale = if normalize && (m - 1.0).abs() > 4.0 * f64::EPSILON {
            1.0 / m
        } else {
            1.0
        };
        let mut out = Vec::with_capacity((ez + 1) * (ew + 1));
        for i in 0..=ez {
            for j in 0..=ew {
                let c = flat[i * (dw + 1) + j];
                out.push(if scale == 1.0 { c } else { c * scale });
            }
        }
        Ok(BihomPoly {
            dz: ez,
            dw: ew,
            coeffs: out.into(),
        })
    }

    pub fn dz(&self) -> usize {
        self.dz
    }

    pub fn dw(&self) -> usize {
        self.dw
    }

    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        self.coeffs[i * (self.dw + 1) + j]
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        (0..=self.dz)
            .map(|i| (0..=self.dw).map(|j| self.coeff(i, j)).collect())
            .collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Value at the canonical representatives of `z` and `w`.
    pub fn eval(&self, z: &ProjPoint, w: &ProjPoint) -> C64 {
        let pz = hom_powers(z.a(), z.b(), self.dz);
        let pw = hom_powers(w.a(), w.b(), self.dw);
        let mut acc = ZERO;
        for i in 0..=self.dz {
            let mut row = ZERO;
            for j in 0..=self.dw {
                row += self.coeff(i, j) * pw[j];
            }
            acc += row * pz[i];
        }
        acc
    }

    /// `|P(z, w)|` relative to the coefficient scale; both points are unit-ish
    /// canonical representatives so this is the on-curve residual.
    pub fn residual(&self, z: &ProjPoint, w: &ProjPoint) -> f64 {
        self.eval(z, w).norm() / self.max_modulus()
    }

    /// Polynomial in z whose roots are `{z : P(z, w) = 0}`; formal degree dz.
    pub fn fiber_poly_z(&self, w: &ProjPoint) -> Result<HomUnivariate> {
        let pw = hom_powers(w.a(), w.b(), self.dw);
        let c: Vec<C64> = (0..=self.dz)
            .map(|i| (0..=self.dw).map(|j| self.coeff(i, j) * pw[j]).sum())
            .collect();
        self.check_fiber(c, w)
    }

    /// Polynomial in w whose roots are `{w : P(z, w) = 0}`; formal degree dw.
    pub fn fiber_poly_w(&self, z: &ProjPoint) -> Result<HomUnivariate> {
        let pz = hom_powers(z.a(), z.b(), self.dz);
        let c: Vec<C64> = (0..=self.dw)
            .map(|j| (0..=self.dz).map(|i| self.coeff(i, j) * pz[i]).sum())
            .collect();
        self.check_fiber(c, z)
    }

    fn check_fiber(&self, c: Vec<C64>, at: &ProjPoint) -> Result<HomUnivariate> {
        let m = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if m <= ZERO_FIBER_TOL * self.max_modulus() {
            return Err(Error::IdenticallyZeroFiber(*at));
        }
        Ok(HomUnivariate::new(c))
    }

    /// Swaps the two variable slots.
    pub fn transpose(&self) -> BihomPoly {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for j in 0..=self.dw {
            for i in 0..=self.dz {
                out.push(self.coeff(i, j));
            }
        }
        BihomPoly {
            dz: self.dw,
            dw: self.dz,
            coeffs: out.into(),
        }
    }

    /// Affine derivative in z, trimmed but kept at its natural scale.
    /// Returns `None` when the derivative vanishes (dz = 0).
    pub fn partial_z(&self) -> Option<BihomPoly> {
        if self.dz == 0 {
            return None;
        }
        let mut out = Vec::with_capacity(self.dz * (self.dw + 1));
        for i in 1..=self.dz {
            for j in 0..=self.dw {
                out.push(self.coeff(i, j) * i as f64);
            }
        }
        Self::assemble(self.dz - 1, self.dw, out, false).ok()
    }

    /// Affine derivative in w, trimmed but kept at its natural scale.
    pub fn partial_w(&self) -> Option<BihomPoly> {
        self.transpose().partial_z().map(|p| p.transpose())
    }

    /// Homogeneous partials `(dP/dz0, dP/dz1, dP/dw0, dP/dw1)` at the
    /// canonical representatives.
    pub fn hom_partials(&self, z: &ProjPoint, w: &ProjPoint) -> [C64; 4] {
        let (dz, dw) = (self.dz, self.dw);
        let pz = hom_powers(z.a(), z.b(), dz);
        let pw = hom_powers(w.a(), w.b(), dw);
        let pz1 = if dz > 0 { hom_powers(z.a(), z.b(), dz - 1) } else { vec![] };
        let pw1 = if dw > 0 { hom_powers(w.a(), w.b(), dw - 1) } else { vec![] };
        let mut out = [ZERO; 4];
        for i in 0..=dz {
            for j in 0..=dw {
                let c = self.coeff(i, j);
                if c == ZERO {
                    continue;
                }
                if dz > 0 {
                    if i < dz {
                        out[0] += c * ((dz - i) as f64) * pz1[i] * pw[j];
                    }
                    if i > 0 {
                        out[1] += c * (i as f64) * pz1[i - 1] * pw[j];
                    }
                }
                if dw > 0 {
                    if j < dw {
                        out[2] += c * ((dw - j) as f64) * pz[i] * pw1[j];
                    }
                    if j > 0 {
                        out[3] += c * (j as f64) * pz[i] * pw1[j - 1];
                    }
                }
            }
        }
        out
    }

    /// True when `other = lambda * self` with `|lambda| = 1` within `tol`.
    pub fn approx_eq_up_to_unit(&self, other: &BihomPoly, tol: f64) -> bool {
        if self.dz != other.dz || self.dw != other.dw {
            return false;
        }
        let (k, _) = self
            .coeffs
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (k, c)| if c.norm() > best.1 { (k, c.norm()) } else { best });
        if self.coeffs[k].norm() == 0.0 {
            return false;
        }
        let lambda = other.coeffs[k] / self.coeffs[k];
        let lambda = lambda / lambda.norm();
        let (sa, sb) = (self.max_modulus(), other.max_modulus());
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .all(|(a, b)| (a / sa * lambda - b / sb).norm() <= tol)
    }

    /// Describes a vertical or horizontal line factor if one is detected.
    pub fn line_factor(&self) -> Option<String> {
        let cut = TRIM_TOL * self.max_modulus();
        if (0..=self.dw).all(|j| self.coeff(0, j).norm() <= cut) {
            return Some("divisible by z (vertical line z = 0)".into());
        }
        if (0..=self.dz).all(|i| self.coeff(i, 0).norm() <= cut) {
            return Some("divisible by w (horizontal line w = 0)".into());
        }
        for &(re, im) in &PROBES {
            let p = ProjPoint::affine(C64::new(re, im));
            let small = |f: Result<HomUnivariate>| match f {
                Ok(h) => h.max_modulus() <= LINE_FACTOR_TOL * self.max_modulus(),
                Err(_) => true,
            };
            if small(self.fiber_poly_w(&p)) {
                return Some(format!("vanishes on the vertical line z = {re}{im:+}i"));
            }
            if small(self.fiber_poly_z(&p)) {
                return Some(format!("vanishes on the horizontal line w = {re}{im:+}i"));
            }
        }
        None
    }

    /// Coefficients of `P(z, .)` in the w slot at affine z.
    fn w_slot_coeffs(&self, z: C64) -> Vec<C64> {
        (0..=self.dw)
            .map(|j| {
                let mut acc = ZERO;
                for i in (0..=self.dz).rev() {
                    acc = acc * z + self.coeff(i, j);
                }
                acc
            })
            .collect()
    }

    /// Coefficients of `P(., w)` in the z slot at affine w.
    fn z_slot_coeffs(&self, w: C64) -> Vec<C64> {
        (0..=self.dz)
            .map(|i| {
                let mut acc = ZERO;
                for j in (0..=self.dw).rev() {
                    acc = acc * w + self.coeff(i, j);
                }
                acc
            })
            .collect()
    }

    /// Eliminates the middle variable of `p1(z, y)` and `p2(y, w)`: the zero set
    /// of the result is the composite relation. Bidegree is at most
    /// `(dz1 * dz2, dw1 * dw2)`; the output is trimmed and normalized.
    pub fn resultant_mid(p1: &BihomPoly, p2: &BihomPoly) -> Result<BihomPoly> {
        if p1.dw == 0 || p2.dz == 0 {
            return Err(Error::InvalidInput(
                "middle variable must appear in both polynomials".into(),
            ));
        }
        let dz = p1.dz * p2.dz;
        let dw = p1.dw * p2.dw;
        let nz = 2 * (dz + 1);
        let nw = 2 * (dw + 1);
        let zs = unit_roots(nz);
        let ws = unit_roots(nw);
        let a_rows: Vec<Vec<C64>> = zs.iter().map(|&z| p1.w_slot_coeffs(z)).collect();
        let b_cols: Vec<Vec<C64>> = ws.iter().map(|&w| p2.z_slot_coeffs(w)).collect();
        let nodes: Vec<(C64, f64)> = (0..nz * nw)
            .into_par_iter()
            .map(|k| sylvester(&a_rows[k / nw], &b_cols[k % nw]))
            .collect();
        let hadamard = nodes.iter().map(|n| n.1).fold(0.0, f64::max);
        let values: Vec<C64> = nodes.into_iter().map(|n| n.0).collect();
        let coeffs = interpolate_2d(values, nz, nw);
        let mut flat = Vec::with_capacity((dz + 1) * (dw + 1));
        for i in 0..=dz {
            for j in 0..=dw {
                flat.push(coeffs[i * nw + j]);
            }
        }
        let m = flat.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(m > TRIM_TOL * hadamard) {
            return Err(Error::DegenerateResultant);
        }
        Self::assemble(dz, dw, flat, true)
    }

    /// Form in w vanishing where the z-fiber has a repeated root, including
    /// w = infinity. Constant 1 when dz <= 1.
    pub fn discriminant_w(&self) -> Result<HomUnivariate> {
        let n = self.dz;
        if n <= 1 {
            return Ok(HomUnivariate::new(vec![ONE]));
        }
        let deg = 2 * (n - 1) * self.dw;
        let nn = 2 * (deg + 1);
        let ws = unit_roots(nn);
        let nodes: Vec<(C64, f64)> = ws
            .par_iter()
            .map(|&w| {
                let c = self.z_slot_coeffs(w);
                let g: Vec<C64> = (0..n).map(|k| c[k] * (n - k) as f64).collect();
                let h: Vec<C64> = (0..n).map(|k| c[k + 1] * (k + 1) as f64).collect();
                sylvester(&g, &h)
            })
            .collect();
        let hadamard = nodes.iter().map(|n| n.1).fold(0.0, f64::max);
        let values: Vec<C64> = nodes.into_iter().map(|n| n.0).collect();
        let coeffs = interpolate_2d(values, nn, 1);
        let out: Vec<C64> = coeffs[..=deg].to_vec();
        let m = out.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(m > TRIM_TOL * hadamard) {
            return Err(Error::DegenerateResultant);
        }
        // drop round-off in slots the true form cannot reach
        let out = out
            .into_iter()
            .map(|c| if c.norm() <= TRIM_TOL * m { ZERO } else { c / m })
            .collect();
        Ok(HomUnivariate::new(out))
    }
}

fn unit_roots(n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Sylvester determinant of two forms (ascending coefficients) together with
/// the Hadamard bound of the matrix.
fn sylvester(a: &[C64], b: &[C64]) -> (C64, f64) {
    let m = a.len() - 1;
    let n = b.len() - 1;
    let size = m + n;
    if size == 0 {
        return (ONE, 1.0);
    }
    let mut mat = DMatrix::<C64>::zeros(size, size);
    for r in 0..n {
        for k in 0..=m {
            mat[(r, r + m - k)] = a[k];
        }
    }
    for r in 0..m {
        for k in 0..=n {
            mat[(n + r, r + n - k)] = b[k];
        }
    }
    let bound = (0..size)
        .map(|r| mat.row(r).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .product();
    (mat.determinant(), bound)
}

/// Inverse DFT along both axes of values sampled at roots of unity, laid
/// out row-major `nz x nw`. Returns coefficients in the same layout.
fn interpolate_2d(mut v: Vec<C64>, nz: usize, nw: usize) -> Vec<C64> {
    let mut planner = FftPlanner::<f64>::new();
    if nw > 1 {
        let fw = planner.plan_fft_forward(nw);
        for row in v.chunks_mut(nw) {
            fw.process(row);
        }
    }
    if nz > 1 {
        let fz = planner.plan_fft_forward(nz);
        let mut col = vec![ZERO; nz];
        for j in 0..nw {
            for i in 0..nz {
                col[i] = v[i * nw + j];
            }
            fz.process(&mut col);
            for i in 0..nz {
                v[i * nw + j] = col[i];
            }
        }
    }
    let s = 1.0 / (nz * nw) as f64;
    v.iter_mut().for_each(|c| *c *= s);
    v
}
