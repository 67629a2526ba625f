//! Stability verdict from the asymptotic spectra: the strong unstable
//! spectrum of `A_0` and the suprema of the spectral manifolds.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::degeneracy::DegeneracyLadder;
use crate::error::{Error, Result};
use crate::linalg::eigenvalues;
use crate::manifolds::{strong_spectrum, ExtReal, LevelSystem, ManifoldGrid, PhasePoint};
use crate::model::DelaySystem;
use crate::optim::{nelder_mead, NelderMeadConfig};

pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "k")]
pub enum Status {
    StronglyUnstable,
    WeaklyUnstable(usize),
    Stable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Witness {
    /// Eigenvalue of `A_0` with positive real part.
    StrongEigenvalue { re: f64, im: f64 },
    Manifold {
        k: usize,
        point: PhasePoint,
        branch: usize,
        gamma: ExtReal,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub k: usize,
    pub sup: ExtReal,
    pub argmax: Option<(PhasePoint, usize)>,
    pub uncertainty: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub status: Status,
    pub witness: Option<Witness>,
    pub sup_gammas: Vec<SupEstimate>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Sampling lattice; the system's default when `None`.
    pub grid: Option<ManifoldGrid>,
    /// Number of best grid cells refined with Nelder–Mead.
    pub seeds: usize,
    /// Tolerance used to decide that a lower manifold reaches zero.
    pub margin: f64,
    pub nelder_mead: NelderMeadConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid: None,
            seeds: 5,
            margin: DEFAULT_MARGIN,
            nelder_mead: NelderMeadConfig::default(),
        }
    }
}

struct Evaluator<'a> {
    level: &'a LevelSystem,
}

impl Evaluator<'_> {
    fn point(&self, x: &[f64]) -> PhasePoint {
        PhasePoint::new(x[0], x[1..].to_vec(), self.level.sigmas())
    }

    /// Maximum over branches, with the branch index.
    fn max_gamma(&self, x: &[f64]) -> Result<(ExtReal, usize)> {
        let br = self.level.branches(&self.point(x))?;
        Ok(br.first().map_or((ExtReal::NegInf, 0), |b| (b.1, 0)))
    }
}

fn to_objective(g: ExtReal) -> f64 {
    match g {
        ExtReal::Finite(x) => -x,
        ExtReal::NegInf => 1e300,
        ExtReal::PosInf => -1e300,
    }
}

fn grid_spacing(grid: &ManifoldGrid, sigmas: &[f64], k: usize) -> Vec<f64> {
    let mut h = vec![(grid.omega_max - grid.omega_min) / (grid.n_omega.max(2) - 1) as f64];
    for &s in sigmas.iter().take(k - 1) {
        h.push(2.0 * std::f64::consts::PI / s / grid.n_phase as f64);
    }
    h
}

/// Grid search plus Nelder–Mead refinement of the largest branch.
fn sup_on_grid(level: &LevelSystem, grid: &ManifoldGrid, cfg: &SearchConfig) -> Result<SupEstimate> {
    let k = level.k();
    let ev = Evaluator { level };
    let points = grid.points(level.sigmas(), k);
    let values: Vec<(ExtReal, usize)> = points
        .par_iter()
        .map(|p| {
            let mut x = vec![p.omega];
            x.extend(&p.phi);
            ev.max_gamma(&x)
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| values[b].0.partial_cmp(&values[a].0).unwrap().then(a.cmp(&b)));
    if let Some(&i) = order.first() {
        if values[i].0 == ExtReal::PosInf {
            return Ok(SupEstimate {
                k,
                sup: ExtReal::PosInf,
                argmax: Some((points[i].clone(), values[i].1)),
                uncertainty: 0.0,
                warnings: vec![],
            });
        }
    }
    let h = grid_spacing(grid, level.sigmas(), k);
    let mut best: Option<(Vec<f64>, ExtReal, f64)> = None;
    let mut hit_pos_inf = None;
    for &i in order.iter().take(cfg.seeds.max(1)) {
        if !values[i].0.is_finite() {
            continue;
        }
        let mut x0 = vec![points[i].omega];
        x0.extend(&points[i].phi);
        let mut failure = None;
        let res = nelder_mead(
            |x| match ev.max_gamma(x) {
                Ok((g, _)) => {
                    if g == ExtReal::PosInf && hit_pos_inf.is_none() {
                        hit_pos_inf = Some(x.to_vec());
                    }
                    to_objective(g)
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    1e300
                }
            },
            &x0,
            &h.iter().map(|s| 0.5 * s).collect::<Vec<_>>(),
            &cfg.nelder_mead,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let g = ev.max_gamma(&res.x)?.0;
        let better = match &best {
            None => true,
            Some((_, bg, _)) => g > *bg,
        };
        if better {
            best = Some((res.x, g, res.simplex_size));
        }
    }
    if let Some(x) = hit_pos_inf {
        let (_, branch) = ev.max_gamma(&x)?;
        return Ok(SupEstimate {
            k,
            sup: ExtReal::PosInf,
            argmax: Some((ev.point(&x), branch)),
            uncertainty: 0.0,
            warnings: vec![],
        });
    }
    let Some((x, g, size)) = best else {
        return Ok(SupEstimate {
            k,
            sup: ExtReal::NegInf,
            argmax: None,
            uncertainty: 0.0,
            warnings: vec![],
        });
    };
    let g_val = g.finite().expect("finite by construction");
    let ring = size.max(1e-7);
    let mut uncertainty: f64 = 0.0;
    for dim in 0..x.len() {
        for s in [-1.0, 1.0] {
            let mut y = x.clone();
            y[dim] += s * ring;
            if let Some(v) = ev.max_gamma(&y)?.0.finite() {
                uncertainty = uncertainty.max((v - g_val).abs());
            }
        }
    }
    let (_, branch) = ev.max_gamma(&x)?;
    Ok(SupEstimate {
        k,
        sup: g,
        argmax: Some((ev.point(&x), branch)),
        uncertainty,
        warnings: vec![],
    })
}

fn near_boundary(grid: &ManifoldGrid, omega: f64) -> bool {
    let width = grid.omega_max - grid.omega_min;
    omega - grid.omega_min < 0.05 * width || grid.omega_max - omega < 0.05 * width
}

/// Finds `omega` where the largest branch of `level` crosses zero, moving
/// away from `start` (where it is nonnegative) at fixed phases.
fn zero_crossing(level: &LevelSystem, start: &PhasePoint) -> Result<Option<(PhasePoint, Complex64)>> {
    let ev = Evaluator { level };
    let mut x0 = vec![start.omega];
    x0.extend(&start.phi);
    let g_at = |w: f64| -> Result<ExtReal> {
        let mut x = x0.clone();
        x[0] = w;
        Ok(ev.max_gamma(&x)?.0)
    };
    let g0 = g_at(start.omega)?;
    if g0 < ExtReal::Finite(0.0) {
        return Ok(None);
    }
    let mut step = 1e-3;
    let mut far = None;
    for _ in 0..80 {
        let w = start.omega + step;
        if g_at(w)? < ExtReal::Finite(0.0) {
            far = Some(w);
            break;
        }
        step *= 2.0;
    }
    let Some(mut hi) = far else { return Ok(None) };
    let mut lo = start.omega;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g_at(mid)? >= ExtReal::Finite(0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = PhasePoint::new(lo, start.phi.clone(), level.sigmas());
    let y = level
        .branches(&p)?
        .into_iter()
        .filter_map(|b| b.0)
        .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()));
    Ok(y.map(|y| (p, y)))
}

/// Supremum estimates of `gamma^(1..=upto)`.
///
/// Level `k` is unbounded (`+inf`) when `det B_k` vanishes somewhere: for
/// `k = 1` this means `A_0` has an eigenvalue on the imaginary axis, for
/// `k >= 2` it happens where a branch of `gamma^(k-1)` crosses zero.
pub fn sup_gamma_all(sys: &DelaySystem, upto: usize, cfg: &SearchConfig) -> Result<Vec<SupEstimate>> {
    let default_grid = ManifoldGrid::default_for(sys);
    let grid = cfg.grid.unwrap_or(default_grid);
    let mut out: Vec<SupEstimate> = Vec::new();
    let mut prev_level: Option<LevelSystem> = None;
    for k in 1..=upto {
        let level = LevelSystem::full(sys, k)?;
        let mut unbounded = None;
        if k == 1 {
            let scale = sys.a(0).norm2().max(1.0);
            for mu in eigenvalues(sys.a(0))? {
                if mu.re.abs() <= 1e-9 * scale {
                    let p = PhasePoint::new(mu.im, vec![], sys.sigmas());
                    unbounded = Some((p, 0));
                    break;
                }
            }
        } else if let (Some(prev), Some(prev_est)) = (&prev_level, out.last()) {
            let reaches_zero = match prev_est.sup {
                ExtReal::PosInf => true,
                ExtReal::Finite(s) => s >= -(cfg.margin + prev_est.uncertainty),
                ExtReal::NegInf => false,
            };
            if reaches_zero {
                let start = prev_est.argmax.as_ref().map(|a| a.0.clone());
                let found = match start {
                    Some(s) => zero_crossing(prev, &s)?,
                    None => None,
                };
                let point = match found {
                    Some((p, y)) => {
                        let mut phi = p.phi.clone();
                        phi.push(-y.arg() / sys.sigma(k - 1));
                        PhasePoint::new(p.omega, phi, sys.sigmas())
                    }
                    None => {
                        let s = prev_est.argmax.as_ref().map(|a| a.0.clone()).unwrap();
                        let mut phi = s.phi.clone();
                        phi.push(0.0);
                        PhasePoint::new(s.omega, phi, sys.sigmas())
                    }
                };
                unbounded = Some((point, 0));
            }
        }
        let est = if let Some((p, b)) = unbounded {
            SupEstimate {
                k,
                sup: ExtReal::PosInf,
                argmax: Some((p, b)),
                uncertainty: 0.0,
                warnings: vec![],
            }
        } else {
            let mut est = sup_on_grid(&level, &grid, cfg)?;
            if let Some((p, _)) = &est.argmax {
                if est.sup.is_finite() && near_boundary(&grid, p.omega) {
                    let wide = ManifoldGrid {
                        omega_min: 2.0 * grid.omega_min,
                        omega_max: 2.0 * grid.omega_max,
                        ..grid
                    };
                    let wide_est = sup_on_grid(&level, &wide, cfg)?;
                    let mut w = vec![format!(
                        "argmax of level {k} at omega = {:.6} lies near the search boundary",
                        p.omega
                    )];
                    if wide_est.sup > est.sup {
                        w.push("a doubled window raised the estimate; using it".into());
                        est = wide_est;
                    }
                    est.warnings.extend(w);
                }
            }
            est
        };
        out.push(est);
        prev_level = Some(level);
    }
    Ok(out)
}

/// Supremum of all branches of `gamma^(k)`.
pub fn sup_gamma(sys: &DelaySystem, k: usize, cfg: &SearchConfig) -> Result<SupEstimate> {
    if k == 0 || k > sys.n() {
        return Err(Error::Invalid(format!("level {k} outside 1..={}", sys.n())));
    }
    Ok(sup_gamma_all(sys, k, cfg)?.pop().expect("k >= 1"))
}

/// Stability verdict for sufficiently small eps.
///
/// Refuses systems violating Condition (ND).
pub fn classify(
    sys: &DelaySystem,
    ladder: &DegeneracyLadder,
    margin: f64,
    cfg: &SearchConfig,
) -> Result<StabilityVerdict> {
    if !ladder.nd_satisfied {
        return Err(Error::NonDegeneracy(
            "the system reduces to fewer delays or to an ODE; asymptotic spectra are not defined".into(),
        ));
    }
    let cfg = SearchConfig { margin, ..*cfg };
    let strong = strong_spectrum(sys)?;
    let sups = sup_gamma_all(sys, sys.n(), &cfg)?;
    let mut notes = vec![];
    for w in &ladder.warnings {
        notes.push(w.clone());
    }
    for s in &sups {
        notes.extend(s.warnings.iter().cloned());
    }
    if let Some(mu) = strong
        .s0_plus
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re))
    {
        return Ok(StabilityVerdict {
            status: Status::StronglyUnstable,
            witness: Some(Witness::StrongEigenvalue { re: mu.re, im: mu.im }),
            sup_gammas: sups,
            notes,
        });
    }
    let positive = |s: &SupEstimate| s.sup > ExtReal::Finite(margin + s.uncertainty);
    let negative = |s: &SupEstimate| s.sup < ExtReal::Finite(-(margin + s.uncertainty));
    if let Some(s) = sups.iter().find(|s| positive(s)) {
        if s.k < sys.n() {
            notes.push(format!(
                "instability already at scale {} below the largest delay scale {}",
                s.k,
                sys.n()
            ));
        }
        let witness = s.argmax.as_ref().map(|(p, b)| Witness::Manifold {
            k: s.k,
            point: p.clone(),
            branch: *b,
            gamma: s.sup,
        });
        return Ok(StabilityVerdict {
            status: Status::WeaklyUnstable(s.k),
            witness,
            sup_gammas: sups,
            notes,
        });
    }
    let status = if sups.iter().all(negative) {
        Status::Stable
    } else {
        Status::Marginal
    };
    Ok(StabilityVerdict {
        status,
        witness: None,
        sup_gammas: sups,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneracy::build_ladder;
    use crate::linalg::ComplexMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar2(a: Complex64, b: f64, cc: f64) -> DelaySystem {
        DelaySystem::scalar(&[a, c(b, 0.0), c(cc, 0.0)], &[1.0, 1.0]).unwrap()
    }

    fn verdict(sys: &DelaySystem) -> StabilityVerdict {
        let ladder = build_ladder(sys, 1e-10).unwrap();
        classify(sys, &ladder, DEFAULT_MARGIN, &SearchConfig::default()).unwrap()
    }

    #[test]
    fn second_level_sup_matches_closed_form() {
        let cfg = SearchConfig::default();
        let s = sup_gamma(&scalar2(c(-0.4, 0.5), 0.1, 0.3), 2, &cfg).unwrap();
        assert!(s.sup.finite().unwrap().abs() < 1e-8, "{s:?}");
        let s = sup_gamma(&scalar2(c(-0.4, 0.5), 0.1, 0.4), 2, &cfg).unwrap();
        assert!((s.sup.finite().unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-8);
        let s = sup_gamma(&scalar2(c(-0.4, 0.5), 0.5, 0.3), 2, &cfg).unwrap();
        assert_eq!(s.sup, ExtReal::PosInf);
    }

    #[test]
    fn first_level_sup_matches_closed_form() {
        for (a, b, sigma) in [(c(-0.4, 0.5), 0.1, 1.0), (c(-0.3, -1.0), 0.6, 2.0), (c(-1.0, 0.0), 0.2, 0.5)] {
            let sys = DelaySystem::scalar(&[a, c(b, 0.0)], &[sigma]).unwrap();
            let s = sup_gamma(&sys, 1, &SearchConfig::default()).unwrap();
            let expected = (b / a.re.abs()).ln() / sigma;
            assert!((s.sup.finite().unwrap() - expected).abs() < 1e-8, "{s:?} vs {expected}");
        }
    }

    #[test]
    fn preset_verdicts_across_the_threshold() {
        assert_eq!(verdict(&scalar2(c(-0.4, 0.5), 0.1, 0.2)).status, Status::Stable);
        assert_eq!(verdict(&scalar2(c(-0.4, 0.5), 0.1, 0.3)).status, Status::Marginal);
        let v = verdict(&scalar2(c(-0.4, 0.5), 0.1, 0.4));
        assert_eq!(v.status, Status::WeaklyUnstable(2));
        match v.witness {
            Some(Witness::Manifold { gamma, .. }) => assert!(gamma > ExtReal::Finite(DEFAULT_MARGIN)),
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn positive_a_is_strongly_unstable() {
        let v = verdict(&scalar2(c(0.7, 0.0), 0.3, 0.2));
        assert_eq!(v.status, Status::StronglyUnstable);
        assert_eq!(v.witness, Some(Witness::StrongEigenvalue { re: 0.7, im: 0.0 }));
    }

    #[test]
    fn large_first_delay_coefficient_destabilizes_first_scale() {
        assert_eq!(verdict(&scalar2(c(-0.4, 0.5), 0.5, 0.3)).status, Status::WeaklyUnstable(1));
    }

    #[test]
    fn nd_violation_is_refused() {
        let a0 = ComplexMatrix::from_real_rows(&[&[-0.5, 1.0], &[0.0, -0.7]]);
        let a1 = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let sys = DelaySystem::new(vec![a0, a1], vec![1.0]).unwrap();
        let ladder = build_ladder(&sys, 1e-10).unwrap();
        assert!(matches!(
            classify(&sys, &ladder, DEFAULT_MARGIN, &SearchConfig::default()),
            Err(Error::NonDegeneracy(_))
        ));
    }

    #[test]
    fn verdict_flips_at_threshold() {
        // |Re a| - |b| = 0.3; sweep |c| across it, skipping the marginal band.
        for i in 0..21 {
            let cc = 0.2 + 0.01 * i as f64;
            if (cc - 0.3).abs() < 0.005 {
                continue;
            }
            let v = verdict(&scalar2(c(-0.4, 0.5), 0.1, cc));
            let expected = if cc < 0.3 { Status::Stable } else { Status::WeaklyUnstable(2) };
            assert_eq!(v.status, expected, "c = {cc}");
        }
    }

    #[test]
    fn unitary_similarity_keeps_verdict() {
        let a0 = ComplexMatrix::from_rows(&[vec![c(-1.0, 0.2), c(0.3, 0.0)], vec![c(0.1, -0.1), c(-0.8, 0.0)]]);
        let a1 = ComplexMatrix::from_rows(&[vec![c(0.2, 0.0), c(0.1, 0.1)], vec![c(0.0, 0.0), c(0.3, 0.0)]]);
        let a2 = ComplexMatrix::from_rows(&[vec![c(0.1, 0.0), c(0.0, 0.0)], vec![c(0.2, 0.0), c(0.25, 0.0)]]);
        let sys = DelaySystem::new(vec![a0, a1, a2], vec![1.0, 1.3]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = ComplexMatrix::from_rows(&[vec![c(s, 0.0), c(0.0, s)], vec![c(0.0, s), c(s, 0.0)]]);
        let rotated = sys.map_matrices(|m| &(&q.adjoint() * m) * &q).unwrap();
        let cfg = SearchConfig {
            grid: Some(ManifoldGrid::default_for(&sys).with_resolution(Some(101), Some(24))),
            ..SearchConfig::default()
        };
        let v1 = classify(&sys, &build_ladder(&sys, 1e-10).unwrap(), DEFAULT_MARGIN, &cfg).unwrap();
        let v2 = classify(&rotated, &build_ladder(&rotated, 1e-10).unwrap(), DEFAULT_MARGIN, &cfg).unwrap();
        assert_eq!(v1.status, v2.status);
        for (x, y) in v1.sup_gammas.iter().zip(&v2.sup_gammas) {
            assert!((x.sup.finite().unwrap() - y.sup.finite().unwrap()).abs() < 1e-6);
        }
    }
}
