//! Dense complex linear algebra for small matrices.
//!
//! Everything here is written for `d <= 16` and favours robustness over
//! speed: LU with partial pivoting for determinants, Householder/QR for
//! eigenvalues and one-sided Jacobi for the SVD.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default relative threshold below which a singular value counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Radius used when grouping numerically repeated eigenvalues.
pub const CLUSTER_RADIUS: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Real-valued convenience constructor. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn scalar(z: Complex64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![z],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Sub-matrix made of the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..self.rows {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: Complex64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Adds `s` to every diagonal entry.
    pub fn shift_diagonal(&mut self, s: Complex64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Induced 2-norm (largest singular value).
    pub fn norm2(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        svd(self).singular_values[0]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what} needs a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.axpy(ONE, rhs);
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.axpy(-ONE, rhs);
        out
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as an array of rows, each entry a `[re, im]` pair.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| [self[(i, j)].re, self[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let data = rows
            .into_iter()
            .flatten()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::new(r, c, data).map_err(D::Error::custom)
    }
}

/// LU factorization with partial pivoting, `P A = L U`, packed in place.
pub struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        m.require_square("LU")?;
        let n = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            if pmax == 0.0 {
                continue;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn det(&self) -> Complex64 {
        let n = self.lu.rows;
        (0..n).fold(Complex64::new(self.sign, 0.0), |acc, i| acc * self.lu[(i, i)])
    }

    /// Ratio of smallest to largest pivot modulus; 0 for an exactly singular matrix.
    pub fn pivot_ratio(&self) -> f64 {
        let n = self.lu.rows;
        if n == 0 {
            return 1.0;
        }
        let mags: Vec<f64> = (0..n).map(|i| self.lu[(i, i)].norm()).collect();
        let max = mags.iter().cloned().fold(0.0, f64::max);
        let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }

    /// Solves `A X = B` for a (possibly multi-column) right-hand side.
    pub fn solve(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.lu.rows;
        assert_eq!(b.rows, n);
        let mut x = ComplexMatrix::zeros(n, b.cols);
        for c in 0..b.cols {
            let mut y: Vec<Complex64> = (0..n).map(|i| b[(self.perm[i], c)]).collect();
            for i in 0..n {
                for k in 0..i {
                    let l = self.lu[(i, k)];
                    let yk = y[k];
                    y[i] -= l * yk;
                }
            }
            for i in (0..n).rev() {
                for k in i + 1..n {
                    let u = self.lu[(i, k)];
                    let yk = y[k];
                    y[i] -= u * yk;
                }
                y[i] /= self.lu[(i, i)];
            }
            for i in 0..n {
                x[(i, c)] = y[i];
            }
        }
        x
    }
}

/// Determinant via LU with partial pivoting.
pub fn det(m: &ComplexMatrix) -> Result<Complex64> {
    m.require_square("det")?;
    Ok(match m.rows {
        0 => ONE,
        1 => m.data[0],
        2 => m.data[0] * m.data[3] - m.data[1] * m.data[2],
        _ => Lu::new(m)?.det(),
    })
}

/// Complex Givens rotation `G = [[c, s], [-conj(s), c]]` with `G [x; y] = [r; 0]`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, ONE);
    }
    let r = ax.hypot(ay);
    let c = ax / r;
    let s = (x / ax) * y.conj() / r;
    (c, s)
}

/// Reduces a square matrix to upper Hessenberg form by Householder similarity.
fn hessenberg(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.rows;
    let mut h = m.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { ONE } else { x[0] / x[0].norm() };
        let alpha = -phase * xnorm;
        let mut v = x.clone();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- (I - 2 v v*) H on rows k+1..n
        for j in 0..n {
            let dot: Complex64 = (0..v.len()).map(|i| v[i].conj() * h[(k + 1 + i, j)]).sum();
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // H <- H (I - 2 v v*) on columns k+1..n
        for i in 0..n {
            let dot: Complex64 = (0..v.len()).map(|j| h[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..v.len() {
                h[(i, k + 1 + j)] -= 2.0 * dot * v[j].conj();
            }
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    h
}

/// All eigenvalues (with algebraic multiplicity, as repeated entries).
///
/// Shifted QR on the Hessenberg form with Wilkinson shifts and an
/// exceptional shift every 10 stalled iterations.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<Complex64>> {
    m.require_square("eigenvalues")?;
    let n = m.rows;
    match n {
        0 => return Ok(vec![]),
        1 => return Ok(vec![m.data[0]]),
        _ => {}
    }
    let mut h = hessenberg(m);
    let mut eig = vec![ZERO; n];
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut lo = hi;
        while lo > 0 {
            let s = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let s = if s == 0.0 { h.max_abs() } else { s };
            if h[(lo, lo - 1)].norm() <= f64::EPSILON * s {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > 100 * n {
            // Give up on the remaining block; the diagonal is the best estimate.
            for i in 0..=hi {
                eig[i] = h[(i, i)];
            }
            break;
        }
        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter % 10 == 0 {
            d + Complex64::new(0.75 * c.norm(), 0.4 * c.norm())
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let m1 = (a + d) * 0.5 + disc;
            let m2 = (a + d) * 0.5 - disc;
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (cs, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = cs * x + sn * y;
                h[(k + 1, j)] = -sn.conj() * x + cs * y;
            }
            rots.push((cs, sn));
        }
        for (idx, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in 0..=(k + 2).min(hi) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * cs + y * sn.conj();
                h[(i, k + 1)] = -x * sn + y * cs;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    Ok(eig)
}

/// Smallest singular value of `M - lambda I`, a scale-aware eigen-residual.
pub fn eigen_residual(m: &ComplexMatrix, lambda: Complex64) -> f64 {
    let mut shifted = m.clone();
    shifted.shift_diagonal(-lambda);
    *svd(&shifted).singular_values.last().unwrap_or(&0.0)
}

/// Groups values closer than `radius` and returns `(representative, count)` pairs.
pub fn cluster(values: &[Complex64], radius: f64) -> Vec<(Complex64, usize)> {
    let mut groups: Vec<(Complex64, Vec<Complex64>)> = Vec::new();
    for &v in values {
        match groups
            .iter_mut()
            .find(|(rep, _)| (*rep - v).norm() <= radius)
        {
            Some((rep, members)) => {
                members.push(v);
                *rep = members.iter().sum::<Complex64>() / members.len() as f64;
            }
            None => groups.push((v, vec![v])),
        }
    }
    groups.into_iter().map(|(rep, m)| (rep, m.len())).collect()
}

/// `M = U diag(singular_values) V*`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let s: Vec<Complex64> = self
            .singular_values
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let us = &self.u * &ComplexMatrix::from_diag(&s);
        &us * &self.v.adjoint()
    }
}

fn col_dot(m: &ComplexMatrix, p: usize, q: usize) -> Complex64 {
    (0..m.rows).map(|i| m[(i, p)].conj() * m[(i, q)]).sum()
}

fn col_norm2(m: &ComplexMatrix, p: usize) -> f64 {
    (0..m.rows).map(|i| m[(i, p)].norm_sqr()).sum()
}

/// Singular value decomposition of a square matrix by one-sided Jacobi.
pub fn svd(m: &ComplexMatrix) -> SvdResult {
    assert!(m.is_square(), "svd supports square matrices");
    let n = m.rows;
    let mut w = m.clone();
    let mut v = ComplexMatrix::identity(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = col_norm2(&w, p);
                let beta = col_norm2(&w, q);
                let gamma = col_dot(&w, p, q);
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..n {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase.conj();
                        mat[(i, p)] = xp * c - xq * s;
                        mat[(i, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| col_norm2(&w, j).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));
    let smax = order.first().map_or(0.0, |&i| sv[i]);
    let cutoff = smax * 1e-14;

    let mut u = ComplexMatrix::zeros(n, n);
    let mut vs = ComplexMatrix::zeros(n, n);
    let mut filled = Vec::with_capacity(n);
    for (jj, &j) in order.iter().enumerate() {
        for i in 0..n {
            vs[(i, jj)] = v[(i, j)];
        }
        if sv[j] > cutoff && sv[j] > 0.0 {
            for i in 0..n {
                u[(i, jj)] = w[(i, j)] / sv[j];
            }
            filled.push(jj);
        }
    }
    // Tiny columns carry no reliable direction; complete U to a unitary basis.
    let mut next_basis = 0;
    for jj in 0..n {
        if filled.contains(&jj) {
            continue;
        }
        loop {
            assert!(next_basis < n, "basis completion failed");
            let mut cand = vec![ZERO; n];
            cand[next_basis] = ONE;
            next_basis += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let dot: Complex64 = (0..n).map(|i| u[(i, f)].conj() * cand[i]).sum();
                    for i in 0..n {
                        cand[i] -= dot * u[(i, f)];
                    }
                }
            }
            let nrm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-3 {
                for i in 0..n {
                    u[(i, jj)] = cand[i] / nrm;
                }
                filled.push(jj);
                break;
            }
        }
    }
    let sorted: Vec<f64> = order.iter().map(|&j| sv[j]).collect();
    sv = sorted;
    SvdResult {
        u,
        singular_values: sv,
        v: vs,
    }
}

/// Left (cokernel) and right (kernel) singular vectors belonging to
/// singular values at most `rank_tol * sigma_max`.
#[derive(Debug, Clone)]
pub struct KernelVectors {
    pub u1: ComplexMatrix,
    pub v1: ComplexMatrix,
    pub rank: usize,
}

pub fn kernel_vectors(m: &ComplexMatrix, rank_tol: f64) -> Result<KernelVectors> {
    kernel_vectors_scaled(m, rank_tol, None)
}

/// As [`kernel_vectors`], but singular values are compared against
/// `rank_tol * scale` instead of `rank_tol * sigma_max`. Used for projected
/// matrices, whose own size says nothing about whether they vanish.
pub fn kernel_vectors_scaled(m: &ComplexMatrix, rank_tol: f64, scale: Option<f64>) -> Result<KernelVectors> {
    m.require_square("kernel_vectors")?;
    if !(rank_tol > 0.0) {
        return Err(Error::Invalid(format!("rank_tol must be positive, got {rank_tol}")));
    }
    let n = m.rows;
    let s = svd(m);
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    let reference = scale.unwrap_or(smax);
    let rank = s
        .singular_values
        .iter()
        .filter(|&&x| x > 0.0 && x > rank_tol * reference)
        .count();
    let tail: Vec<usize> = (rank..n).collect();
    let mut u1 = s.u.select_columns(&tail);
    let mut v1 = s.v.select_columns(&tail);
    canonicalize_phases(&mut u1);
    canonicalize_phases(&mut v1);
    Ok(KernelVectors { u1, v1, rank })
}

/// Rotates each column so that its largest-modulus entry is real and positive.
fn canonicalize_phases(m: &mut ComplexMatrix) {
    for j in 0..m.cols {
        let (imax, _) = (0..m.rows)
            .map(|i| (i, m[(i, j)].norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        let z = m[(imax, j)];
        if z.norm() == 0.0 {
            continue;
        }
        let ph = z.conj() / z.norm();
        for i in 0..m.rows {
            m[(i, j)] *= ph;
        }
    }
}

/// Numerical rank with the default relative tolerance.
pub fn rank(m: &ComplexMatrix, rank_tol: f64) -> usize {
    let s = svd(m);
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    s.singular_values
        .iter()
        .filter(|&&x| smax > 0.0 && x > rank_tol * smax)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let data = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexMatrix::new(n, n, data).unwrap()
    }

    #[test]
    fn det_identity_and_diagonal() {
        assert_eq!(det(&ComplexMatrix::identity(3)).unwrap(), c(1.0, 0.0));
        let d = ComplexMatrix::from_diag(&[c(2.0, 0.0), c(0.0, 3.0)]);
        assert_eq!(det(&d).unwrap(), c(0.0, 6.0));
    }

    #[test]
    fn det_rejects_non_square() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(det(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn construction_rejects_nan_and_bad_shape() {
        assert!(ComplexMatrix::new(2, 2, vec![ZERO; 3]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn det_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..20 {
                let m = random_matrix(&mut rng, n);
                let d = det(&m).unwrap();
                let p: Complex64 = eigenvalues(&m).unwrap().iter().product();
                assert!((d - p).norm() <= 1e-10 * d.norm().max(1e-3), "n={n} {d} vs {p}");
            }
        }
    }

    #[test]
    fn eigenvalues_simple_cases() {
        let mut e = eigenvalues(&ComplexMatrix::from_real_rows(&[&[-1.0, 0.0], &[0.0, 2.0]])).unwrap();
        e.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert_eq!(e, vec![c(-1.0, 0.0), c(2.0, 0.0)]);
        let e = eigenvalues(&ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert!(e.iter().all(|z| z.norm() < 1e-12));
        assert_eq!(e.len(), 2);
    }

    #[test]
    fn eigenvalues_of_companion_match_quadratic_formula() {
        // z^2 - (1+i) z + i = (z - 1)(z - i)
        let p1 = c(1.0, 1.0);
        let p0 = c(0.0, 1.0);
        let comp = ComplexMatrix::from_rows(&[vec![p1, -p0], vec![c(1.0, 0.0), ZERO]]);
        let disc = (p1 * p1 - 4.0 * p0).sqrt();
        let expected = [(p1 + disc) / 2.0, (p1 - disc) / 2.0];
        let got = eigenvalues(&comp).unwrap();
        for e in expected {
            assert!(got.iter().any(|g| (g - e).norm() < 1e-10), "{e} missing from {got:?}");
        }
    }

    #[test]
    fn eigen_residuals_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=8 {
            let m = random_matrix(&mut rng, n);
            for l in eigenvalues(&m).unwrap() {
                assert!(eigen_residual(&m, l) < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn svd_of_jordan_block_and_zero() {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let s = svd(&a);
        assert_eq!(s.singular_values, vec![1.0, 0.0]);
        let z = svd(&ComplexMatrix::zeros(3, 3));
        assert_eq!(z.singular_values, vec![0.0; 3]);
        assert!((&z.u - &ComplexMatrix::identity(3)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            let m = random_matrix(&mut rng, n);
            let s = svd(&m);
            let err = (&s.reconstruct() - &m).frobenius_norm() / m.frobenius_norm();
            assert!(err < 1e-12, "n={n} err={err}");
            let uu = &s.u.adjoint() * &s.u;
            assert!((&uu - &ComplexMatrix::identity(n)).frobenius_norm() < 1e-12);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn kernel_vectors_of_jordan_block() {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let k = kernel_vectors(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.rank, 1);
        assert!((k.u1.column(0)[0]).norm() < 1e-15);
        assert!((k.u1.column(0)[1] - ONE).norm() < 1e-15);
        assert!((k.v1.column(0)[0] - ONE).norm() < 1e-15);
        assert!((k.v1.column(0)[1]).norm() < 1e-15);
    }

    #[test]
    fn kernel_vectors_full_rank_is_empty() {
        let k = kernel_vectors(&ComplexMatrix::identity(4), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.rank, 4);
        assert_eq!(k.u1.cols(), 0);
        assert_eq!(k.v1.cols(), 0);
        assert!(kernel_vectors(&ComplexMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn kernel_vectors_of_rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<Complex64> = (0..4).map(|_| c(rng.gen(), rng.gen())).collect();
        let v: Vec<Complex64> = (0..4).map(|_| c(rng.gen(), rng.gen())).collect();
        let mut m = ComplexMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = u[i] * v[j].conj();
            }
        }
        let k = kernel_vectors(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.rank, 1);
        for j in 0..3 {
            let du: Complex64 = (0..4).map(|i| k.u1[(i, j)].conj() * u[i]).sum();
            let dv: Complex64 = (0..4).map(|i| k.v1[(i, j)].conj() * v[i]).sum();
            assert!(du.norm() < 1e-10 && dv.norm() < 1e-10);
        }
    }

    #[test]
    fn cluster_merges_nearby_values() {
        let g = cluster(&[c(1.0, 0.0), c(1.0 + 1e-10, 0.0), c(2.0, 0.0)], CLUSTER_RADIUS);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1, 2);
    }
}
