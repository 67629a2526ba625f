//! Projection recursion for rank-deficient delay matrices.
//!
//! When `A_n` is singular, the characteristic matrix is projected onto the
//! cokernel/kernel of `A_n`, giving a smaller system with one delay fewer
//! and a (possibly singular) coefficient `J` in front of `-lambda`. The
//! projection is repeated while the highest remaining delay matrix stays
//! singular. Each level `m` yields the truncated function `chi~_{m-1}`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{det, kernel_vectors_scaled, svd, ComplexMatrix};
use crate::model::{delays, DelaySystem, Epsilon, GUARD_LIMIT};
use crate::poly::Poly;
use crate::rootfinder::Analytic;

#[derive(Debug, Clone, Serialize)]
pub struct LadderLevel {
    /// Level index `m`; this level defines `chi~_{m-1}`.
    pub k: usize,
    #[serde(rename = "J1")]
    pub j1: ComplexMatrix,
    /// Projected `A_{j,1}^{(m)}` for `j = 0..m-1`.
    #[serde(rename = "A_proj")]
    pub a_proj: Vec<ComplexMatrix>,
    pub dim: usize,
    /// Set when the level lies below the index `k_under` and is kept only as
    /// an approximant for the stable half-plane without guarantees.
    pub heuristic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyLadder {
    /// Levels in descending order of `k` (highest delay first).
    pub levels: Vec<LadderLevel>,
    pub k_under: Option<usize>,
    pub nd_satisfied: bool,
    pub an_singular: bool,
    pub rank_tol: f64,
    pub warnings: Vec<String>,
}

impl DegeneracyLadder {
    pub fn level(&self, k: usize) -> Option<&LadderLevel> {
        self.levels.iter().find(|l| l.k == k)
    }

    /// Level defining `chi~_k` (that is, level `k + 1`).
    pub fn truncated_level(&self, k: usize) -> Option<&LadderLevel> {
        self.level(k + 1)
    }

    /// Whether `chi~_k` contributes to the asymptotic spectra: it must exist
    /// and not be a heuristic level.
    pub fn has_truncated(&self, k: usize) -> bool {
        self.truncated_level(k).is_some_and(|l| !l.heuristic)
    }

    /// Human-readable dump: one block per level with its dimensions and matrices.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "an_singular: {}\nk_under: {}\nnd_satisfied: {}\nrank_tol: {:e}\n",
            self.an_singular,
            self.k_under.map_or("none".to_string(), |k| k.to_string()),
            self.nd_satisfied,
            self.rank_tol
        ));
        for l in &self.levels {
            out.push_str(&format!(
                "level {} dim {}{}\n  J1 = {:?}\n",
                l.k,
                l.dim,
                if l.heuristic { " (heuristic)" } else { "" },
                l.j1
            ));
            for (j, a) in l.a_proj.iter().enumerate() {
                out.push_str(&format!("  A_{j},1 = {a:?}\n"));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn project(u: &ComplexMatrix, m: &ComplexMatrix, v: &ComplexMatrix) -> ComplexMatrix {
    &(&u.adjoint() * m) * v
}

fn ladder_levels(sys: &DelaySystem, rank_tol: f64) -> Result<Vec<LadderLevel>> {
    let n = sys.n();
    let an = sys.a(n);
    let kv = kernel_vectors_scaled(an, rank_tol, None)?;
    if kv.rank == sys.dim() && !an.is_zero() {
        return Ok(vec![]);
    }
    let (u, v) = (kv.u1, kv.v1);
    let mut level = LadderLevel {
        k: n,
        j1: project(&u, &ComplexMatrix::identity(sys.dim()), &v),
        a_proj: (0..n).map(|j| project(&u, sys.a(j), &v)).collect(),
        dim: u.cols(),
        heuristic: false,
    };
    let mut levels = vec![];
    let mut k = n - 1;
    while k >= 1 {
        let m = &level.a_proj[k];
        let kvm = kernel_vectors_scaled(m, rank_tol, Some(sys.a(k).norm2()))?;
        if kvm.rank == level.dim {
            break;
        }
        let next = LadderLevel {
            k,
            j1: project(&kvm.u1, &level.j1, &kvm.v1),
            a_proj: (0..k).map(|j| project(&kvm.u1, &level.a_proj[j], &kvm.v1)).collect(),
            dim: kvm.u1.cols(),
            heuristic: false,
        };
        levels.push(std::mem::replace(&mut level, next));
        k -= 1;
    }
    levels.push(level);
    Ok(levels)
}

fn k_under(levels: &[LadderLevel], n: usize) -> Option<usize> {
    let lowest = levels.last()?.k;
    if lowest + 1 <= n || n == 1 {
        Some(lowest)
    } else {
        None
    }
}

/// Builds the projection ladder and evaluates Condition (ND).
///
/// The rank decisions are repeated with a ten times looser tolerance; a
/// warning is recorded if the ladder shape changes.
pub fn build_ladder(sys: &DelaySystem, rank_tol: f64) -> Result<DegeneracyLadder> {
    let n = sys.n();
    let mut levels = ladder_levels(sys, rank_tol)?;
    let an_singular = !levels.is_empty();
    let k_under = k_under(&levels, n);
    for l in &mut levels {
        l.heuristic = l.k >= 2 && l.k != n && k_under.is_some_and(|ku| l.k - 1 < ku);
    }
    let mut warnings = vec![];
    let loose = ladder_levels(sys, 10.0 * rank_tol)?;
    let shape = |ls: &[LadderLevel]| ls.iter().map(|l| (l.k, l.dim)).collect::<Vec<_>>();
    if shape(&loose) != shape(&levels) {
        warnings.push(format!(
            "rank decisions change with tolerance {:e}: levels {:?} vs {:?}",
            10.0 * rank_tol,
            shape(&levels),
            shape(&loose)
        ));
    }
    let mut ladder = DegeneracyLadder {
        levels,
        k_under,
        nd_satisfied: true,
        an_singular,
        rank_tol,
        warnings,
    };
    ladder.nd_satisfied = check_nd(&ladder, sys)?;
    Ok(ladder)
}

/// Condition (ND): if the ladder reaches level 1 and `J_1^(1)` is singular,
/// the projection of `A_{0,1}^(1)` onto the kernel of `J_1^(1)` must be
/// invertible.
pub fn check_nd(ladder: &DegeneracyLadder, sys: &DelaySystem) -> Result<bool> {
    if !ladder.an_singular || ladder.k_under != Some(1) {
        return Ok(true);
    }
    let Some(level) = ladder.level(1) else {
        return Ok(true);
    };
    let kv = kernel_vectors_scaled(&level.j1, ladder.rank_tol, Some(1.0))?;
    if kv.rank == level.dim {
        return Ok(true);
    }
    let m = project(&kv.u1, &level.a_proj[0], &kv.v1);
    let smin = svd(&m).singular_values.last().copied().unwrap_or(0.0);
    let scale = sys.a(0).norm2().max(1.0);
    Ok(smin > ladder.rank_tol * scale)
}

/// `chi~_k(lambda)` built from level `k + 1`.
pub struct TruncatedChar<'a> {
    level: &'a LadderLevel,
    taus: Vec<f64>,
}

impl<'a> TruncatedChar<'a> {
    pub fn new(ladder: &'a DegeneracyLadder, sys: &DelaySystem, k: usize, eps: Epsilon) -> Result<Self> {
        let level = ladder.truncated_level(k).ok_or_else(|| {
            Error::Invalid(format!("no ladder level defines the truncated function of order {k}"))
        })?;
        let mut taus = delays(sys, eps)?;
        taus.truncate(k);
        Ok(Self { level, taus })
    }

    pub fn check(&self, lambda: Complex64) -> Result<()> {
        for (j, &tau) in self.taus.iter().enumerate() {
            let exponent = lambda.re.abs() * tau;
            if exponent > GUARD_LIMIT {
                return Err(Error::EvaluationRange {
                    k: j + 1,
                    exponent,
                    limit: GUARD_LIMIT,
                });
            }
        }
        Ok(())
    }

    pub fn matrix_unchecked(&self, lambda: Complex64) -> ComplexMatrix {
        let mut m = self.level.a_proj[0].clone();
        m.axpy(-lambda, &self.level.j1);
        for (j, &tau) in self.taus.iter().enumerate() {
            m.axpy((-lambda * tau).exp(), &self.level.a_proj[j + 1]);
        }
        m
    }

    pub fn value(&self, lambda: Complex64) -> Result<Complex64> {
        self.check(lambda)?;
        Ok(self.value_unchecked(lambda))
    }

    pub fn value_unchecked(&self, lambda: Complex64) -> Complex64 {
        det(&self.matrix_unchecked(lambda)).expect("square projected matrix")
    }
}

impl Analytic for TruncatedChar<'_> {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.value_unchecked(z)
    }
    fn phase_rate(&self) -> f64 {
        self.taus.iter().sum::<f64>() + 1.0
    }
}

/// `chi~_k^eps(lambda)` for `1 <= k <= n-1`, or `chi~_0(lambda)` for `k = 0`.
pub fn truncated_char(
    ladder: &DegeneracyLadder,
    sys: &DelaySystem,
    k: usize,
    eps: Epsilon,
    lambda: Complex64,
) -> Result<Complex64> {
    TruncatedChar::new(ladder, sys, k, eps)?.value(lambda)
}

/// Asymptotic strong stable spectrum: zeros of `chi~_0` with negative real
/// part, repeated by multiplicity. Empty unless `k_under = 1`.
pub fn strong_stable_spectrum(ladder: &DegeneracyLadder) -> Result<Vec<Complex64>> {
    if ladder.k_under != Some(1) {
        return Ok(vec![]);
    }
    let Some(level) = ladder.level(1) else {
        return Ok(vec![]);
    };
    let a = &level.a_proj[0];
    let j = &level.j1;
    let a_norm = a.norm2();
    let j_min_nonzero = svd(j)
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > ladder.rank_tol)
        .fold(f64::INFINITY, f64::min);
    let radius = if j_min_nonzero.is_finite() {
        1.0 + a_norm / j_min_nonzero
    } else {
        1.0 + a_norm
    };
    let mut p = Poly::interpolate_on_circle(level.dim, radius, |z| {
        let mut m = a.clone();
        m.axpy(-z, j);
        det(&m)
    })?;
    let scale = p
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.norm() * radius.powi(i as i32))
        .fold(0.0, f64::max);
    if scale <= 1e-14 * a_norm.max(1.0).powi(level.dim as i32) {
        return Err(Error::Degenerate(
            "the truncated polynomial of order 0 vanishes identically".into(),
        ));
    }
    p.trim_leading(radius, 1e-10);
    let mut roots: Vec<Complex64> = p.roots(radius)?.into_iter().filter(|z| z.re < 0.0).collect();
    roots.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    Ok(roots)
}
