//! The delay system `x' = A0 x + sum_k A_k x(t - sigma_k eps^-k)` and its
//! characteristic matrix / function.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{det, ComplexMatrix, Lu};

/// Largest admissible `|Re(lambda)| * tau_k` (natural-log scale of the
/// double-precision range).
pub const GUARD_LIMIT: f64 = 700.0;

/// Pivot ratio below which Jacobi's formula is abandoned for the exact
/// column-expansion derivative.
const JACOBI_PIVOT_RATIO: f64 = 1e-8;

/// Small parameter of the delay hierarchy, `0 < eps <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Invalid(format!("eps must lie in (0, 1], got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Epsilon::new(f64::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// Coefficient matrices `A0..An` and delay scale factors `sigma_1..sigma_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    matrices: Vec<ComplexMatrix>,
    sigma: Vec<f64>,
}

impl DelaySystem {
    pub fn new(matrices: Vec<ComplexMatrix>, sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::Invalid("at least one delay is required".into()));
        }
        if matrices.len() != sigma.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} delays need {} matrices, got {}",
                sigma.len(),
                sigma.len() + 1,
                matrices.len()
            )));
        }
        let d = matrices[0].rows();
        if d == 0 {
            return Err(Error::Dimension("empty system".into()));
        }
        for (k, a) in matrices.iter().enumerate() {
            if a.rows() != d || a.cols() != d {
                return Err(Error::Dimension(format!(
                    "A{k} is {}x{}, expected {d}x{d}",
                    a.rows(),
                    a.cols()
                )));
            }
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Invalid(format!("sigma must be positive, got {s}")));
        }
        Ok(Self { matrices, sigma })
    }

    /// Scalar system `-lambda + a + sum_k b_k e^{-lambda tau_k}`.
    pub fn scalar(coeffs: &[Complex64], sigma: &[f64]) -> Result<Self> {
        Self::new(
            coeffs.iter().map(|&z| ComplexMatrix::scalar(z)).collect(),
            sigma.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].rows()
    }

    /// Number of delays `n`.
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// `A_k` for `0 <= k <= n`.
    pub fn a(&self, k: usize) -> &ComplexMatrix {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }

    /// `sigma_k` for `1 <= k <= n`.
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma[k - 1]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    /// Indices `k` with `A_k = 0`; the asymptotic theory assumes there are none.
    pub fn zero_coefficients(&self) -> Vec<usize> {
        (0..=self.n()).filter(|&k| self.matrices[k].is_zero()).collect()
    }

    /// Applies the same transformation to every coefficient matrix.
    pub fn map_matrices<F: FnMut(&ComplexMatrix) -> ComplexMatrix>(&self, f: F) -> Result<Self> {
        Self::new(self.matrices.iter().map(f).collect(), self.sigma.clone())
    }

    /// `||A0|| + sum ||A_k|| + 1` in the induced 2-norm: bounds `|Im(lambda)|`
    /// of eigenvalues with non-negative real part.
    pub fn frequency_bound(&self) -> f64 {
        self.matrices.iter().map(ComplexMatrix::norm2).sum::<f64>() + 1.0
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }
}

/// File layout: `{"d": .., "n": .., "sigma": [..], "A0": [[[re, im], ..], ..], .., "An": ..}`.
impl Serialize for DelaySystem {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3 + self.matrices.len()))?;
        map.serialize_entry("d", &self.dim())?;
        map.serialize_entry("n", &self.n())?;
        map.serialize_entry("sigma", &self.sigma)?;
        for (k, a) in self.matrices.iter().enumerate() {
            map.serialize_entry(&format!("A{k}"), a)?;
        }
        map.end()
    }
}

#[derive(Deserialize)]
struct SystemFile {
    d: usize,
    n: usize,
    sigma: Vec<f64>,
    #[serde(flatten)]
    matrices: BTreeMap<String, ComplexMatrix>,
}

impl<'de> Deserialize<'de> for DelaySystem {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let mut file = SystemFile::deserialize(de)?;
        if file.sigma.len() != file.n {
            return Err(D::Error::custom(format!(
                "n = {} but sigma has {} entries",
                file.n,
                file.sigma.len()
            )));
        }
        let mut matrices = Vec::with_capacity(file.n + 1);
        for k in 0..=file.n {
            let a = file
                .matrices
                .remove(&format!("A{k}"))
                .ok_or_else(|| D::Error::custom(format!("missing matrix A{k}")))?;
            if a.rows() != file.d || a.cols() != file.d {
                return Err(D::Error::custom(format!("A{k} is not {0}x{0}", file.d)));
            }
            matrices.push(a);
        }
        if let Some(extra) = file.matrices.keys().next() {
            return Err(D::Error::custom(format!("unexpected field {extra}")));
        }
        DelaySystem::new(matrices, file.sigma).map_err(D::Error::custom)
    }
}

/// `tau_k = sigma_k * eps^-k` for `k = 1..n`.
pub fn delays(sys: &DelaySystem, eps: Epsilon) -> Result<Vec<f64>> {
    (1..=sys.n())
        .map(|k| {
            let tau = sys.sigma(k) * eps.value().powi(-(k as i32));
            if tau.is_finite() {
                Ok(tau)
            } else {
                Err(Error::DelayRange { k, eps: eps.value() })
            }
        })
        .collect()
}

/// Characteristic matrix and function of a system at a fixed `eps`.
///
/// Holds the delays so repeated evaluations (root finding) avoid recomputing
/// them. The `*_unchecked` methods skip the range guard; callers must have
/// checked the evaluation region with [`CharFunction::check`] or
/// [`CharFunction::check_window`].
#[derive(Debug, Clone)]
pub struct CharFunction<'a> {
    sys: &'a DelaySystem,
    taus: Vec<f64>,
}

impl<'a> CharFunction<'a> {
    pub fn new(sys: &'a DelaySystem, eps: Epsilon) -> Result<Self> {
        Ok(Self {
            sys,
            taus: delays(sys, eps)?,
        })
    }

    pub fn system(&self) -> &DelaySystem {
        self.sys
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// Fails when `|Re(lambda)| * tau_k > GUARD_LIMIT` for some `k`.
    pub fn check(&self, lambda: Complex64) -> Result<()> {
        self.check_real_part(lambda.re.abs())
    }

    /// Guard check for every point with real part in `[re_min, re_max]`.
    pub fn check_window(&self, re_min: f64, re_max: f64) -> Result<()> {
        self.check_real_part(re_min.abs().max(re_max.abs()))
    }

    fn check_real_part(&self, re_abs: f64) -> Result<()> {
        for (i, &tau) in self.taus.iter().enumerate() {
            let exponent = re_abs * tau;
            if exponent > GUARD_LIMIT {
                return Err(Error::EvaluationRange {
                    k: i + 1,
                    exponent,
                    limit: GUARD_LIMIT,
                });
            }
        }
        Ok(())
    }

    fn exponentials(&self, lambda: Complex64) -> Vec<Complex64> {
        self.taus.iter().map(|&t| (-lambda * t).exp()).collect()
    }

    pub fn matrix(&self, lambda: Complex64) -> Result<ComplexMatrix> {
        self.check(lambda)?;
        Ok(self.matrix_unchecked(lambda))
    }

    pub fn matrix_unchecked(&self, lambda: Complex64) -> ComplexMatrix {
        let mut m = self.sys.a(0).clone();
        m.shift_diagonal(-lambda);
        for (k, e) in self.exponentials(lambda).into_iter().enumerate() {
            m.axpy(e, self.sys.a(k + 1));
        }
        m
    }

    /// `d Delta / d lambda = -I - sum_k tau_k A_k e^{-lambda tau_k}`.
    fn matrix_derivative(&self, lambda: Complex64) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.sys.dim()).scale(Complex64::new(-1.0, 0.0));
        for (k, e) in self.exponentials(lambda).into_iter().enumerate() {
            m.axpy(-e * self.taus[k], self.sys.a(k + 1));
        }
        m
    }

    pub fn value(&self, lambda: Complex64) -> Result<Complex64> {
        self.check(lambda)?;
        Ok(self.value_unchecked(lambda))
    }

    pub fn value_unchecked(&self, lambda: Complex64) -> Complex64 {
        if self.sys.dim() == 1 {
            let mut v = self.sys.a(0).data()[0] - lambda;
            for (k, &t) in self.taus.iter().enumerate() {
                v += self.sys.a(k + 1).data()[0] * (-lambda * t).exp();
            }
            return v;
        }
        det(&self.matrix_unchecked(lambda)).expect("square by construction")
    }

    pub fn derivative(&self, lambda: Complex64) -> Result<Complex64> {
        self.check(lambda)?;
        Ok(self.derivative_unchecked(lambda))
    }

    /// Jacobi's formula `chi' = chi * tr(Delta^-1 Delta')`; near-singular
    /// `Delta` switches to the column expansion `sum_j det(Delta with
    /// column j replaced by column j of Delta')`, which is exact.
    pub fn derivative_unchecked(&self, lambda: Complex64) -> Complex64 {
        let d = self.sys.dim();
        if d == 1 {
            let mut v = Complex64::new(-1.0, 0.0);
            for (k, &t) in self.taus.iter().enumerate() {
                v -= self.sys.a(k + 1).data()[0] * t * (-lambda * t).exp();
            }
            return v;
        }
        let delta = self.matrix_unchecked(lambda);
        let ddelta = self.matrix_derivative(lambda);
        let lu = Lu::new(&delta).expect("square by construction");
        if lu.pivot_ratio() > JACOBI_PIVOT_RATIO {
            return lu.det() * lu.solve(&ddelta).trace();
        }
        column_expansion_derivative(&delta, &ddelta)
    }
}

fn column_expansion_derivative(delta: &ComplexMatrix, ddelta: &ComplexMatrix) -> Complex64 {
    let d = delta.rows();
    (0..d)
        .map(|j| {
            let mut m = delta.clone();
            for i in 0..d {
                m[(i, j)] = ddelta[(i, j)];
            }
            det(&m).expect("square")
        })
        .sum()
}

/// `Delta(lambda) = -lambda I + A0 + sum_k A_k exp(-lambda sigma_k eps^-k)`.
pub fn char_matrix(sys: &DelaySystem, eps: Epsilon, lambda: Complex64) -> Result<ComplexMatrix> {
    CharFunction::new(sys, eps)?.matrix(lambda)
}

/// `chi(lambda) = det Delta(lambda)`.
pub fn char_value(sys: &DelaySystem, eps: Epsilon, lambda: Complex64) -> Result<Complex64> {
    CharFunction::new(sys, eps)?.value(lambda)
}

pub fn char_derivative(sys: &DelaySystem, eps: Epsilon, lambda: Complex64) -> Result<Complex64> {
    CharFunction::new(sys, eps)?.derivative(lambda)
}
