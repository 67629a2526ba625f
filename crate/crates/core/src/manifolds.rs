//! Asymptotic spectra: the strong spectrum of `A_0`, the spectral manifolds
//! `gamma_l^(k)` obtained from roots `Y` of the truncated characteristic
//! polynomials, their singular points, the sampled sets `A_k` and the
//! rescaling map between eigenvalues and those sets.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::degeneracy::DegeneracyLadder;
use crate::error::{Error, Result};
use crate::harness::fmt_float;
use crate::linalg::{cluster, det, eigenvalues, kernel_vectors_scaled, svd, ComplexMatrix, CLUSTER_RADIUS};
use crate::model::{DelaySystem, Epsilon};
use crate::poly::Poly;

/// Real number extended by `-inf` and `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    fn rank(self) -> (i8, f64) {
        match self {
            ExtReal::NegInf => (-1, 0.0),
            ExtReal::Finite(x) => (0, x),
            ExtReal::PosInf => (1, 0.0),
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.rank().partial_cmp(&other.rank())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::PosInf => write!(f, "inf"),
            ExtReal::Finite(x) => write!(f, "{}", fmt_float(*x)),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

/// Frequency and phases `(omega, phi_1, ..., phi_{k-1})`, with each
/// `phi_j` reduced to `[0, 2 pi / sigma_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub omega: f64,
    pub phi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(omega: f64, phi: Vec<f64>, sigmas: &[f64]) -> Self {
        assert!(phi.len() <= sigmas.len(), "more phases than delays");
        let phi = phi
            .into_iter()
            .zip(sigmas)
            .map(|(p, &s)| {
                let period = 2.0 * PI / s;
                let r = p.rem_euclid(period);
                if r >= period {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        Self { omega, phi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SingularityFlags {
    pub plus_infinity_condition: bool,
    pub minus_infinity_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldSample {
    pub k: usize,
    pub point: PhasePoint,
    pub branch: usize,
    /// Root of the truncated polynomial; `None` for branches at `-inf`.
    #[serde(rename = "Y")]
    pub y: Option<Complex64>,
    pub gamma: ExtReal,
    /// Sample comes from a projected (tilde) polynomial.
    pub tilde: bool,
    pub flags: SingularityFlags,
}

impl ManifoldSample {
    /// `gamma + i omega` for finite gamma.
    pub fn projected(&self) -> Option<Complex64> {
        self.gamma.finite().map(|g| Complex64::new(g, self.point.omega))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongSpectrum {
    #[serde(rename = "S0")]
    pub s0: Vec<Complex64>,
    #[serde(rename = "S0_plus")]
    pub s0_plus: Vec<Complex64>,
    /// Smallest distance between distinct eigenvalues; `None` when there is
    /// only one distinct eigenvalue.
    pub r0: Option<f64>,
    pub r: f64,
}

pub fn strong_spectrum(sys: &DelaySystem) -> Result<StrongSpectrum> {
    let mut s0 = eigenvalues(sys.a(0))?;
    s0.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let s0_plus: Vec<Complex64> = s0.iter().copied().filter(|z| z.re > 1e-12).collect();
    let distinct: Vec<Complex64> = cluster(&s0, CLUSTER_RADIUS).into_iter().map(|(z, _)| z).collect();
    let mut r0: Option<f64> = None;
    for i in 0..distinct.len() {
        for j in i + 1..distinct.len() {
            let d = (distinct[i] - distinct[j]).norm();
            r0 = Some(r0.map_or(d, |r: f64| r.min(d)));
        }
    }
    let axis = s0.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let r = r0.unwrap_or(f64::INFINITY).min(axis) / 3.0;
    Ok(StrongSpectrum { s0, s0_plus, r0, r })
}

/// `Pi^(k)(a + ib) = a eps^-k + ib`.
pub fn rescale(eps: Epsilon, k: usize, lambda: Complex64) -> Complex64 {
    Complex64::new(lambda.re * eps.value().powi(-(k as i32)), lambda.im)
}

/// The data behind one family of truncated polynomials
/// `det(-i omega J + M_0 + sum_{j<k} M_j e^{-i sigma_j phi_j} + M_k Y)`.
///
/// For the spectral manifolds of the full system `J = I` and `M_j = A_j`;
/// for the projected (tilde) families they come from a ladder level.
#[derive(Debug, Clone)]
pub struct LevelSystem {
    k: usize,
    j: ComplexMatrix,
    mats: Vec<ComplexMatrix>,
    sigma: Vec<f64>,
    rank_k: usize,
    smin_k: f64,
    kernel: Option<(ComplexMatrix, ComplexMatrix)>,
    tilde: bool,
}

const RANK_TOL: f64 = crate::linalg::DEFAULT_RANK_TOL;

impl LevelSystem {
    fn build(
        k: usize,
        j: ComplexMatrix,
        mats: Vec<ComplexMatrix>,
        sigma: Vec<f64>,
        scale: f64,
        tilde: bool,
    ) -> Result<Self> {
        let ak = &mats[k];
        let kv = kernel_vectors_scaled(ak, RANK_TOL, Some(scale))?;
        let sv = svd(ak).singular_values;
        let smin_k = sv
            .iter()
            .copied()
            .filter(|&s| s > RANK_TOL * scale)
            .fold(f64::INFINITY, f64::min);
        let kernel = (kv.rank < ak.rows()).then_some((kv.u1, kv.v1));
        Ok(Self {
            k,
            j,
            mats,
            sigma,
            rank_k: kv.rank,
            smin_k,
            kernel,
            tilde,
        })
    }

    /// Level `k` family of the full system.
    pub fn full(sys: &DelaySystem, k: usize) -> Result<Self> {
        if k == 0 || k > sys.n() {
            return Err(Error::Invalid(format!("manifold level {k} outside 1..={}", sys.n())));
        }
        let scale = sys.a(k).norm2();
        Self::build(
            k,
            ComplexMatrix::identity(sys.dim()),
            sys.matrices()[..=k].to_vec(),
            sys.sigmas()[..k].to_vec(),
            scale,
            false,
        )
    }

    /// Projected family for `chi~_k`, if the ladder provides it.
    pub fn tilde(sys: &DelaySystem, ladder: &DegeneracyLadder, k: usize) -> Result<Option<Self>> {
        if k == 0 || k >= sys.n() || !ladder.has_truncated(k) {
            return Ok(None);
        }
        let level = ladder.truncated_level(k).expect("checked above");
        let scale = sys.a(k).norm2();
        Self::build(
            k,
            level.j1.clone(),
            level.a_proj[..=k].to_vec(),
            sys.sigmas()[..k].to_vec(),
            scale,
            true,
        )
        .map(Some)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.j.rows()
    }

    /// `rank M_k`, the generic number of branches.
    pub fn rank(&self) -> usize {
        self.rank_k
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn is_tilde(&self) -> bool {
        self.tilde
    }

    /// Constant part `-i omega J + M_0 + sum_{j<k} M_j e^{-i sigma_j phi_j}`.
    pub fn b_matrix(&self, point: &PhasePoint) -> ComplexMatrix {
        assert_eq!(point.phi.len(), self.k - 1, "phase count must be k-1");
        let mut b = self.mats[0].clone();
        b.axpy(Complex64::new(0.0, -point.omega), &self.j);
        for (jdx, &phi) in point.phi.iter().enumerate() {
            let e = Complex64::from_polar(1.0, -self.sigma[jdx] * phi);
            b.axpy(e, &self.mats[jdx + 1]);
        }
        b
    }

    pub fn value(&self, point: &PhasePoint, y: Complex64) -> Complex64 {
        let mut m = self.b_matrix(point);
        m.axpy(y, &self.mats[self.k]);
        det(&m).expect("square")
    }

    fn radius(&self, b: &ComplexMatrix) -> f64 {
        if self.smin_k.is_finite() {
            1.0 + b.frobenius_norm() / self.smin_k
        } else {
            1.0 + b.frobenius_norm()
        }
    }

    /// Coefficients of the polynomial in `Y` (degree at most `rank M_k`,
    /// vanishing leading terms removed) and the interpolation radius.
    pub fn poly(&self, point: &PhasePoint) -> Result<(Poly, f64)> {
        let b = self.b_matrix(point);
        self.poly_from_b(&b)
    }

    fn poly_from_b(&self, b: &ComplexMatrix) -> Result<(Poly, f64)> {
        let ak = &self.mats[self.k];
        let radius = self.radius(b);
        let d = self.dim();
        let mut p = if d == 1 {
            Poly::new(vec![b[(0, 0)], ak[(0, 0)]])
        } else {
            Poly::interpolate_on_circle(d, radius, |y| {
                let mut m = b.clone();
                m.axpy(y, ak);
                det(&m)
            })?
        };
        p.coeffs.truncate(self.rank_k + 1);
        let natural = (b.frobenius_norm() + radius * ak.frobenius_norm()).max(1e-300).powi(d as i32);
        let size = p
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm() * radius.powi(i as i32))
            .fold(0.0, f64::max);
        if size <= 1e-14 * natural {
            return Err(Error::Trivial { k: self.k });
        }
        p.trim_leading(radius, 1e-10);
        Ok((p, radius))
    }

    pub fn singularity_flags(&self, point: &PhasePoint) -> SingularityFlags {
        self.flags_from_b(&self.b_matrix(point))
    }

    fn flags_from_b(&self, b: &ComplexMatrix) -> SingularityFlags {
        let scale = b.frobenius_norm().max(1.0);
        let plus = det(b).expect("square").norm() <= 1e-10 * scale.powi(self.dim() as i32);
        let minus = self.kernel.as_ref().is_some_and(|(u, v)| {
            let p = &(&u.adjoint() * b) * v;
            det(&p).expect("square").norm() <= 1e-10 * scale.powi(p.rows() as i32)
        });
        SingularityFlags {
            plus_infinity_condition: plus,
            minus_infinity_condition: minus,
        }
    }

    /// All `rank M_k` branches at a point, sorted by decreasing gamma.
    pub fn branches(&self, point: &PhasePoint) -> Result<Vec<(Option<Complex64>, ExtReal)>> {
        let b = self.b_matrix(point);
        self.branches_from_b(&b)
    }

    fn branches_from_b(&self, b: &ComplexMatrix) -> Result<Vec<(Option<Complex64>, ExtReal)>> {
        let (p, radius) = self.poly_from_b(b)?;
        let sigma_k = self.sigma_k();
        let roots = if p.degree() == 1 {
            vec![-p.coeffs[0] / p.coeffs[1]]
        } else {
            p.roots(radius)?
        };
        let mut out: Vec<(Option<Complex64>, ExtReal)> = roots
            .into_iter()
            .map(|y| {
                let g = if y.norm() <= 1e-14 * radius {
                    ExtReal::PosInf
                } else {
                    ExtReal::Finite(-y.norm().ln() / sigma_k)
                };
                (Some(y), g)
            })
            .collect();
        for _ in p.degree()..self.rank_k {
            out.push((None, ExtReal::NegInf));
        }
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap().then_with(|| {
                let ka = a.0.map_or(0.0, |z| z.arg());
                let kb = b.0.map_or(0.0, |z| z.arg());
                ka.partial_cmp(&kb).unwrap()
            })
        });
        Ok(out)
    }

    fn sigma_k(&self) -> f64 {
        self.sigma.get(self.k - 1).copied().unwrap_or(1.0)
    }

    /// Largest gamma over all branches; `NegInf` if every branch is at `-inf`.
    pub fn max_gamma(&self, point: &PhasePoint) -> Result<ExtReal> {
        Ok(self
            .branches(point)?
            .first()
            .map(|b| b.1)
            .unwrap_or(ExtReal::NegInf))
    }

    pub fn samples(&self, point: &PhasePoint) -> Result<Vec<ManifoldSample>> {
        let b = self.b_matrix(point);
        let flags = self.flags_from_b(&b);
        Ok(self
            .branches_from_b(&b)?
            .into_iter()
            .enumerate()
            .map(|(l, (y, gamma))| ManifoldSample {
                k: self.k,
                point: point.clone(),
                branch: l,
                y,
                gamma,
                tilde: self.tilde,
                flags,
            })
            .collect())
    }
}

/// Coefficients of `chi_k(omega, phi; Y)` as a polynomial in `Y`.
pub fn truncated_char_poly(sys: &DelaySystem, k: usize, point: &PhasePoint) -> Result<Poly> {
    Ok(LevelSystem::full(sys, k)?.poly(point)?.0)
}

/// `chi_k(omega, phi; Y)` evaluated directly as a determinant.
pub fn chi_k(sys: &DelaySystem, k: usize, point: &PhasePoint, y: Complex64) -> Result<Complex64> {
    Ok(LevelSystem::full(sys, k)?.value(point, y))
}

pub fn gamma_branches(sys: &DelaySystem, k: usize, point: &PhasePoint) -> Result<Vec<ManifoldSample>> {
    LevelSystem::full(sys, k)?.samples(point)
}

/// Conditions under which a branch of `gamma^(k)` is `+inf` (`det B_k = 0`)
/// or `-inf` (`det U* B_k V = 0` on the kernel of a singular `A_k`).
///
/// The `+inf` condition is reported for full-rank `A_k` as well: a zero
/// root `Y = 0` exists whenever `det B_k` vanishes.
pub fn singularity_test(sys: &DelaySystem, k: usize, point: &PhasePoint) -> Result<SingularityFlags> {
    Ok(LevelSystem::full(sys, k)?.singularity_flags(point))
}

/// Sampling lattice for `(omega, phi_1, ..., phi_{k-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub n_phase: usize,
}

impl ManifoldGrid {
    pub const DEFAULT_N_OMEGA: usize = 401;
    pub const DEFAULT_N_PHASE: usize = 64;

    /// `omega` over `[-W, W]` with `W = sum ||A_k||_2 + 1`, which bounds
    /// `|Im lambda|` for eigenvalues in the closed right half-plane.
    pub fn default_for(sys: &DelaySystem) -> Self {
        let w = sys.frequency_bound();
        Self {
            omega_min: -w,
            omega_max: w,
            n_omega: Self::DEFAULT_N_OMEGA,
            n_phase: Self::DEFAULT_N_PHASE,
        }
    }

    pub fn with_resolution(mut self, n_omega: Option<usize>, n_phase: Option<usize>) -> Self {
        if let Some(n) = n_omega {
            self.n_omega = n.max(2);
        }
        if let Some(n) = n_phase {
            self.n_phase = n.max(1);
        }
        self
    }

    pub fn omegas(&self) -> Vec<f64> {
        if self.n_omega == 1 {
            return vec![0.5 * (self.omega_min + self.omega_max)];
        }
        let h = (self.omega_max - self.omega_min) / (self.n_omega - 1) as f64;
        (0..self.n_omega).map(|i| self.omega_min + h * i as f64).collect()
    }

    pub fn phases(&self, sigma: f64) -> Vec<f64> {
        let period = 2.0 * PI / sigma;
        (0..self.n_phase).map(|i| period * i as f64 / self.n_phase as f64).collect()
    }

    /// Lattice points for level `k`, in lexicographic order.
    pub fn points(&self, sigmas: &[f64], k: usize) -> Vec<PhasePoint> {
        let mut pts: Vec<Vec<f64>> = self.omegas().into_iter().map(|w| vec![w]).collect();
        for &sigma in sigmas.iter().take(k.saturating_sub(1)) {
            let ph = self.phases(sigma);
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    ph.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        pts.into_iter()
            .map(|mut v| {
                let omega = v.remove(0);
                PhasePoint { omega, phi: v }
            })
            .collect()
    }
}

/// All branch samples of a family over the lattice, ordered by (point, branch).
pub fn sample_level(level: &LevelSystem, grid: &ManifoldGrid) -> Result<Vec<ManifoldSample>> {
    let points = grid.points(level.sigmas(), level.k());
    let chunks: Vec<Vec<ManifoldSample>> = points
        .par_iter()
        .map(|p| level.samples(p))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn sample_manifold(sys: &DelaySystem, k: usize, grid: &ManifoldGrid) -> Result<Vec<ManifoldSample>> {
    sample_level(&LevelSystem::full(sys, k)?, grid)
}

/// Sampled asymptotic continuous spectrum `A_k`: `S_k^+` joined with the
/// stable part of the projected family for `k < n`, all of `S_n` for `k = n`.
pub struct AsymptoticSet {
    k: usize,
    n: usize,
    families: Vec<LevelSystem>,
    n_phase: usize,
    cloud: Vec<Complex64>,
}

impl AsymptoticSet {
    pub fn new(sys: &DelaySystem, ladder: &DegeneracyLadder, k: usize, grid: &ManifoldGrid) -> Result<Self> {
        let mut families = vec![LevelSystem::full(sys, k)?];
        if let Some(t) = LevelSystem::tilde(sys, ladder, k)? {
            families.push(t);
        }
        let mut set = Self {
            k,
            n: sys.n(),
            families,
            n_phase: grid.n_phase,
            cloud: vec![],
        };
        let mut cloud = vec![];
        for fam in &set.families {
            for s in sample_level(fam, grid)? {
                if let Some(z) = s.projected() {
                    if set.keep(fam, z.re) {
                        cloud.push(z);
                    }
                }
            }
        }
        cloud.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
        set.cloud = cloud;
        Ok(set)
    }

    fn keep(&self, fam: &LevelSystem, gamma: f64) -> bool {
        if fam.is_tilde() {
            gamma < 0.0
        } else {
            self.k == self.n || gamma > 0.0
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Samples on the lattice, sorted by imaginary part.
    pub fn cloud(&self) -> &[Complex64] {
        &self.cloud
    }

    /// Members of the set with imaginary part exactly `omega`, over the
    /// phase lattice.
    pub fn at_omega(&self, omega: f64) -> Result<Vec<Complex64>> {
        let grid = ManifoldGrid {
            omega_min: omega,
            omega_max: omega,
            n_omega: 1,
            n_phase: self.n_phase,
        };
        let mut out = vec![];
        for fam in &self.families {
            for p in grid.points(fam.sigmas(), self.k) {
                for (_, g) in fam.branches(&p)? {
                    if let Some(g) = g.finite() {
                        if self.keep(fam, g) {
                            out.push(Complex64::new(g, omega));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Distance from `z` to the sampled set: the smaller of the nearest
    /// lattice sample and the nearest sample on the line `Im = Im z`.
    /// `None` when the set has no samples at all.
    pub fn distance(&self, z: Complex64) -> Result<Option<f64>> {
        let mut best = f64::INFINITY;
        let start = self.cloud.partition_point(|p| p.im < z.im);
        for p in self.cloud[start..].iter() {
            if p.im - z.im >= best {
                break;
            }
            best = best.min((p - z).norm());
        }
        for p in self.cloud[..start].iter().rev() {
            if z.im - p.im >= best {
                break;
            }
            best = best.min((p - z).norm());
        }
        for p in self.at_omega(z.im)? {
            best = best.min((p.re - z.re).abs());
        }
        Ok(best.is_finite().then_some(best))
    }
}

/// Samples of `A_k` on the lattice, sorted by imaginary part.
pub fn assemble_a_k(
    sys: &DelaySystem,
    ladder: &DegeneracyLadder,
    k: usize,
    grid: &ManifoldGrid,
) -> Result<Vec<Complex64>> {
    Ok(AsymptoticSet::new(sys, ladder, k, grid)?.cloud)
}

/// CSV with columns `k, omega, phi_1..phi_{n-1}, branch, gamma, Y_re, Y_im, flags`.
/// Phase columns beyond `k-1` are left blank.
pub fn write_samples_csv<W: Write>(out: W, n: usize, samples: &[ManifoldSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string(), "omega".to_string()];
    header.extend((1..n).map(|j| format!("phi_{j}")));
    header.extend(["branch", "gamma", "Y_re", "Y_im", "flags"].map(String::from));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![s.k.to_string(), fmt_float(s.point.omega)];
        for j in 0..n.saturating_sub(1) {
            rec.push(s.point.phi.get(j).map_or(String::new(), |&p| fmt_float(p)));
        }
        rec.push(s.branch.to_string());
        rec.push(s.gamma.to_string());
        match s.y {
            Some(y) => {
                rec.push(fmt_float(y.re));
                rec.push(fmt_float(y.im));
            }
            None => {
                rec.push(String::new());
                rec.push(String::new());
            }
        }
        let mut flags = vec![];
        if s.tilde {
            flags.push("tilde");
        }
        if s.flags.plus_infinity_condition {
            flags.push("plus");
        }
        if s.flags.minus_infinity_condition {
            flags.push("minus");
        }
        rec.push(flags.join("|"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneracy::build_ladder;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar2(a: Complex64, b: Complex64, cc: Complex64) -> DelaySystem {
        DelaySystem::scalar(&[a, b, cc], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn strong_spectrum_examples() {
        let sys = DelaySystem::new(
            vec![ComplexMatrix::from_diag(&[c(-1.0, 0.0), c(2.0, 0.0)]), ComplexMatrix::identity(2)],
            vec![1.0],
        )
        .unwrap();
        let s = strong_spectrum(&sys).unwrap();
        assert_eq!(s.s0_plus.len(), 1);
        assert!((s.s0_plus[0] - c(2.0, 0.0)).norm() < 1e-12);
        assert!((s.r0.unwrap() - 3.0).abs() < 1e-12);
        assert!((s.r - 1.0 / 3.0).abs() < 1e-12);

        let s = strong_spectrum(&DelaySystem::scalar(&[c(-0.4, 0.5), c(0.1, 0.0)], &[1.0]).unwrap()).unwrap();
        assert!(s.s0_plus.is_empty());
        assert_eq!(s.r0, None);
        let s = strong_spectrum(&DelaySystem::scalar(&[c(0.7, 0.0), c(0.1, 0.0)], &[1.0]).unwrap()).unwrap();
        assert_eq!(s.s0_plus, vec![c(0.7, 0.0)]);
    }

    #[test]
    fn rescale_examples() {
        let e = Epsilon::new(0.1).unwrap();
        assert!((rescale(e, 2, c(0.01, 2.0)) - c(1.0, 2.0)).norm() < 1e-12);
        assert_eq!(rescale(e, 2, c(0.0, 3.0)), c(0.0, 3.0));
        let e = Epsilon::new(0.01).unwrap();
        assert!((rescale(e, 1, c(-0.005, 0.3)) - c(-0.5, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn phases_are_canonicalized() {
        let p = PhasePoint::new(0.0, vec![-0.5, 7.0], &[1.0, 2.0]);
        assert!((p.phi[0] - (2.0 * PI - 0.5)).abs() < 1e-12);
        assert!((p.phi[1] - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn scalar_poly_coefficients() {
        let sys = DelaySystem::scalar(&[c(-0.4, 0.5), c(0.1, 0.2)], &[1.0]).unwrap();
        let p = truncated_char_poly(&sys, 1, &PhasePoint::new(0.3, vec![], &[1.0])).unwrap();
        assert_eq!(p.degree(), 1);
        assert!((p.coeffs[0] - c(-0.4, 0.2)).norm() < 1e-14);
        assert!((p.coeffs[1] - c(0.1, 0.2)).norm() < 1e-14);
    }

    #[test]
    fn nilpotent_top_matrix_gives_degree_one() {
        let (a1, a2, a3, a4) = (c(-0.5, 0.1), c(1.0, 0.0), c(0.8, -0.2), c(0.7, 0.0));
        let a0 = ComplexMatrix::from_rows(&[vec![a1, a2], vec![a3, a4]]);
        let an = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let sys = DelaySystem::new(vec![a0, an], vec![1.0]).unwrap();
        let w = 0.6;
        let iw = c(0.0, w);
        let p = truncated_char_poly(&sys, 1, &PhasePoint::new(w, vec![], &[1.0])).unwrap();
        assert_eq!(p.degree(), 1);
        let expect0 = (a1 - iw) * (a4 - iw) - a3 * a2;
        assert!((p.coeffs[0] - expect0).norm() < 1e-12);
        assert!((p.coeffs[1] + a3).norm() < 1e-12);
    }

    #[test]
    fn identity_top_matrix_gives_double_root() {
        let sys = DelaySystem::new(vec![ComplexMatrix::zeros(2, 2), ComplexMatrix::identity(2)], vec![1.0]).unwrap();
        let pt = PhasePoint::new(1.0, vec![], &[1.0]);
        let p = truncated_char_poly(&sys, 1, &pt).unwrap();
        assert_eq!(p.degree(), 2);
        // (Y - i)^2 = Y^2 - 2i Y - 1
        assert!((p.coeffs[0] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((p.coeffs[1] - c(0.0, -2.0)).norm() < 1e-12);
        assert!((p.coeffs[2] - c(1.0, 0.0)).norm() < 1e-12);
        let br = gamma_branches(&sys, 1, &pt).unwrap();
        assert_eq!(br.len(), 2);
        for s in br {
            assert!((s.y.unwrap() - c(0.0, 1.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn unit_root_has_zero_gamma() {
        let sys = DelaySystem::scalar(&[c(-1.0, 0.0), c(1.0, 0.0)], &[1.0]).unwrap();
        let br = gamma_branches(&sys, 1, &PhasePoint::new(0.0, vec![], &[1.0])).unwrap();
        assert_eq!(br.len(), 1);
        assert!((br[0].y.unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        assert!(br[0].gamma.finite().unwrap().abs() < 1e-14);
    }

    #[test]
    fn scalar_gamma_at_maximum() {
        let sys = DelaySystem::scalar(&[c(-0.4, 0.5), c(0.1, 0.0)], &[1.0]).unwrap();
        let br = gamma_branches(&sys, 1, &PhasePoint::new(0.5, vec![], &[1.0])).unwrap();
        assert!((br[0].gamma.finite().unwrap() + 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn vanishing_constant_term_gives_plus_infinity() {
        // det(-i w I + A0) = 0 at w = 0 for A0 = [[1, 1], [1, 1]].
        let a0 = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let an = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let sys = DelaySystem::new(vec![a0, an], vec![1.0]).unwrap();
        let pt = PhasePoint::new(0.0, vec![], &[1.0]);
        let br = gamma_branches(&sys, 1, &pt).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].gamma, ExtReal::PosInf);
        assert!(singularity_test(&sys, 1, &pt).unwrap().plus_infinity_condition);
    }

    #[test]
    fn degree_drop_gives_minus_infinity() {
        // chi_1 = (a1 - i w)(a4 - i w) - a3 (a2 + Y): the Y coefficient is -a3,
        // which vanishes when a3 = 0 (projection of B onto the kernel is singular).
        let a0 = ComplexMatrix::from_real_rows(&[&[-0.5, 1.0], &[0.0, 0.7]]);
        let an = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let sys = DelaySystem::new(vec![a0, an], vec![1.0]).unwrap();
        let pt = PhasePoint::new(0.2, vec![], &[1.0]);
        let br = gamma_branches(&sys, 1, &pt).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].gamma, ExtReal::NegInf);
        let f = singularity_test(&sys, 1, &pt).unwrap();
        assert!(f.minus_infinity_condition);
        assert!(!f.plus_infinity_condition);
    }

    #[test]
    fn neutral_strong_spectrum_is_singular_at_first_level() {
        let sys = scalar2(c(0.0, 0.5), c(0.1, 0.0), c(0.3, 0.0));
        let pt = PhasePoint::new(0.5, vec![], &[1.0, 1.0]);
        assert!(singularity_test(&sys, 1, &pt).unwrap().plus_infinity_condition);
        assert_eq!(gamma_branches(&sys, 1, &pt).unwrap()[0].gamma, ExtReal::PosInf);
    }

    #[test]
    fn full_rank_generic_point_has_no_flags() {
        let sys = DelaySystem::new(
            vec![ComplexMatrix::from_real_rows(&[&[-1.0, 0.3], &[0.2, -2.0]]), ComplexMatrix::identity(2)],
            vec![1.0],
        )
        .unwrap();
        let f = singularity_test(&sys, 1, &PhasePoint::new(0.4, vec![], &[1.0])).unwrap();
        assert_eq!(f, SingularityFlags::default());
    }

    #[test]
    fn singular_phases_are_flagged_at_level_two() {
        let (a, b) = (c(-0.4, 0.5), c(0.5, 0.0));
        let sys = scalar2(a, b, c(0.3, 0.0));
        let root = (b.norm_sqr() - a.re * a.re).sqrt();
        let theta = (-a.re / b.norm()).acos();
        for s in [1.0, -1.0] {
            let phi = b.arg() + s * theta;
            let omega = a.im - b.norm() * (phi - b.arg()).sin();
            assert!((omega - (a.im - s * root)).abs() < 1e-12);
            let pt = PhasePoint::new(omega, vec![phi], &[1.0, 1.0]);
            assert!(chi_k(&sys, 2, &pt, c(0.0, 0.0)).unwrap().norm() < 1e-12);
            assert!(singularity_test(&sys, 2, &pt).unwrap().plus_infinity_condition);
        }
    }

    #[test]
    fn triviality_is_reported() {
        let sys = DelaySystem::new(
            vec![ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[0.0, 0.0]]), ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]])],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(
            gamma_branches(&sys, 1, &PhasePoint::new(0.0, vec![], &[1.0])),
            Err(Error::Trivial { k: 1 })
        ));
    }

    #[test]
    fn a1_is_empty_when_first_manifold_is_negative() {
        let sys = scalar2(c(-0.4, 0.5), c(0.1, 0.0), c(0.3, 0.0));
        let ladder = build_ladder(&sys, 1e-10).unwrap();
        let grid = ManifoldGrid::default_for(&sys);
        assert!(assemble_a_k(&sys, &ladder, 1, &grid).unwrap().is_empty());
    }

    #[test]
    fn a1_follows_unstable_curve() {
        let sys = scalar2(c(-0.4, 0.5), c(0.5, 0.0), c(0.3, 0.0));
        let ladder = build_ladder(&sys, 1e-10).unwrap();
        let grid = ManifoldGrid::default_for(&sys);
        let pts = assemble_a_k(&sys, &ladder, 1, &grid).unwrap();
        assert!(!pts.is_empty());
        for p in &pts {
            assert!(p.im > 0.2 && p.im < 0.8);
            assert!(p.re > 0.0);
        }
        assert!(pts.iter().any(|p| p.im < 0.25) && pts.iter().any(|p| p.im > 0.75));
    }

    #[test]
    fn a_n_contains_all_finite_samples() {
        let sys = scalar2(c(-0.4, 0.5), c(0.1, 0.0), c(0.3, 0.0));
        let ladder = build_ladder(&sys, 1e-10).unwrap();
        let grid = ManifoldGrid::default_for(&sys).with_resolution(Some(21), Some(8));
        assert_eq!(assemble_a_k(&sys, &ladder, 2, &grid).unwrap().len(), 21 * 8);
    }

    #[test]
    fn tilde_family_contributes_stable_samples() {
        // n = 2 with A_2 of rank one: the projected level-2 family defines chi~_1.
        let a0 = ComplexMatrix::from_real_rows(&[&[-1.0, 0.5], &[0.3, -0.7]]);
        let a1 = ComplexMatrix::from_real_rows(&[&[0.1, 0.0], &[-0.4, 0.2]]);
        let a2 = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let sys = DelaySystem::new(vec![a0, a1, a2], vec![1.0, 1.0]).unwrap();
        let ladder = build_ladder(&sys, 1e-10).unwrap();
        let level = LevelSystem::tilde(&sys, &ladder, 1).unwrap().unwrap();
        // chi~_1(w; Y) = a + b Y with a = 0.3, b = -0.4, so gamma = -ln(0.75) > 0 everywhere.
        let br = level.branches(&PhasePoint::new(0.3, vec![], &[1.0, 1.0])).unwrap();
        assert!((br[0].1.finite().unwrap() - (-(0.75f64).ln())).abs() < 1e-12);
        let grid = ManifoldGrid::default_for(&sys).with_resolution(Some(11), Some(4));
        let a1_samples = assemble_a_k(&sys, &ladder, 1, &grid).unwrap();
        assert!(a1_samples.iter().all(|z| z.re > 0.0));
    }

    #[test]
    fn csv_layout() {
        let sys = scalar2(c(-0.4, 0.5), c(0.1, 0.0), c(0.3, 0.0));
        let grid = ManifoldGrid::default_for(&sys).with_resolution(Some(2), Some(2));
        let s1 = sample_manifold(&sys, 1, &grid).unwrap();
        let s2 = sample_manifold(&sys, 2, &grid).unwrap();
        let mut buf = vec![];
        write_samples_csv(&mut buf, 2, &[s1, s2].concat()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,omega,phi_1,branch,gamma,Y_re,Y_im,flags");
        assert_eq!(lines.len(), 1 + 2 + 4);
        assert!(lines[1].starts_with("1,") && lines[1].split(',').nth(2) == Some(""));
    }

    fn random_system(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DelaySystem {
        let mats = (0..=n)
            .map(|_| {
                let data = (0..d * d)
                    .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                ComplexMatrix::new(d, d, data).unwrap()
            })
            .collect();
        let sigma = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        DelaySystem::new(mats, sigma).unwrap()
    }

    #[test]
    fn consecutive_levels_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = rng.gen_range(1..=3);
            let n = rng.gen_range(2..=3);
            let sys = random_system(&mut rng, d, n);
            let k = rng.gen_range(1..n);
            let omega = rng.gen_range(-3.0..3.0);
            let phis: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..7.0)).collect();
            let lower = PhasePoint::new(omega, phis[..k - 1].to_vec(), sys.sigmas());
            let upper = PhasePoint::new(omega, phis.clone(), sys.sigmas());
            let y = Complex64::from_polar(1.0, -sys.sigma(k) * upper.phi[k - 1]);
            let lhs = truncated_char_poly(&sys, k, &lower).unwrap().eval(y);
            let rhs = truncated_char_poly(&sys, k + 1, &upper).unwrap().coeffs[0];
            assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()), "{lhs} vs {rhs}");
        }
    }

    proptest! {
        #[test]
        fn branch_count_matches_rank(seed in 0u64..10_000, omega in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.gen_range(1..=3);
            let mut sys = random_system(&mut rng, d, 1);
            if rng.gen_bool(0.5) && d > 1 {
                // make A_1 rank deficient
                sys = sys.map_matrices(|m| m.clone()).unwrap();
                let mut a1 = sys.a(1).clone();
                for i in 0..d { a1[(i, 0)] = c(0.0, 0.0); }
                sys = DelaySystem::new(vec![sys.a(0).clone(), a1], vec![1.0]).unwrap();
            }
            let level = LevelSystem::full(&sys, 1).unwrap();
            let br = level.branches(&PhasePoint::new(omega, vec![], &[1.0])).unwrap();
            prop_assert_eq!(br.len(), level.rank());
        }

        #[test]
        fn finite_gamma_matches_root_modulus(seed in 0u64..10_000, omega in -3.0f64..3.0, phi in 0.0f64..7.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.gen_range(1..=3);
            let sys = random_system(&mut rng, d, 2);
            let pt = PhasePoint::new(omega, vec![phi], sys.sigmas());
            for s in gamma_branches(&sys, 2, &pt).unwrap() {
                if let (Some(y), ExtReal::Finite(g)) = (s.y, s.gamma) {
                    prop_assert!((g + y.norm().ln() / sys.sigma(2)).abs() < 1e-12);
                    let r = chi_k(&sys, 2, &pt, y).unwrap().norm();
                    let scale = sys.matrices().iter().map(|m| m.norm2()).sum::<f64>() + omega.abs() + y.norm() * sys.a(2).norm2();
                    prop_assert!(r <= 1e-8 * scale.powi(d as i32));
                }
            }
        }

        #[test]
        fn rescale_is_linear_in_real_part(re in -10.0f64..10.0, im in -10.0f64..10.0, e in 0.001f64..1.0, k in 1usize..4) {
            let eps = Epsilon::new(e).unwrap();
            let z = rescale(eps, k, c(re, im));
            prop_assert_eq!(z.im, im);
            prop_assert!((z.re - re / e.powi(k as i32)).abs() <= 1e-12 * z.re.abs().max(1.0));
        }
    }
}
