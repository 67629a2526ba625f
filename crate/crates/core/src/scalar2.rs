//! Closed forms for the scalar equation with two delays
//! `-lambda + a + b e^{-lambda/eps} + c e^{-lambda/eps^2} = 0`.
//!
//! Everything here is written out from the explicit formulas and shares no
//! numerics with the general machinery, so the two can check each other.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::classify::{StabilityVerdict, Status, Witness};
use crate::error::{Error, Result};
use crate::manifolds::{ExtReal, PhasePoint};

/// Values this close are treated as equal when deciding table boundaries.
pub const EQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarParams {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

impl ScalarParams {
    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Result<Self> {
        if a.norm() == 0.0 || b.norm() == 0.0 || c.norm() == 0.0 {
            return Err(Error::NonDegeneracy("a, b and c must all be nonzero".into()));
        }
        Ok(Self { a, b, c })
    }
}

fn neg_half_log(num: f64, den: f64) -> ExtReal {
    if num == 0.0 {
        ExtReal::PosInf
    } else {
        ExtReal::Finite(-0.5 * (num / den).ln())
    }
}

/// `gamma^(1)(omega) = -1/2 ln(((omega - Im a)^2 + Re a^2) / |b|^2)`.
pub fn gamma1(p: &ScalarParams, omega: f64) -> ExtReal {
    let num = (omega - p.a.im).powi(2) + p.a.re.powi(2);
    neg_half_log(num, p.b.norm_sqr())
}

/// `omega_{1,2} = Im a -+ sqrt(|b|^2 - Re a^2)` when `|b| >= |Re a|`.
pub fn gamma1_zeros(p: &ScalarParams) -> Option<(f64, f64)> {
    let disc = p.b.norm_sqr() - p.a.re.powi(2);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((p.a.im - s, p.a.im + s))
}

/// `ln(|b| / |Re a|)`, attained at `omega = Im a`; `+inf` when `Re a = 0`.
pub fn sup_gamma1(p: &ScalarParams) -> ExtReal {
    if p.a.re == 0.0 {
        ExtReal::PosInf
    } else {
        ExtReal::Finite((p.b.norm() / p.a.re.abs()).ln())
    }
}

/// `gamma^(2)(omega, phi_1)`.
pub fn gamma2(p: &ScalarParams, omega: f64, phi1: f64) -> ExtReal {
    let t = phi1 - p.b.arg();
    let x = p.a.re + p.b.norm() * t.cos();
    let y = omega - p.a.im + p.b.norm() * t.sin();
    neg_half_log(x * x + y * y, p.c.norm_sqr())
}

/// Frequency maximizing `gamma^(2)` at fixed `phi_1`.
pub fn omega_max(p: &ScalarParams, phi1: f64) -> f64 {
    p.a.im - p.b.norm() * (phi1 - p.b.arg()).sin()
}

/// `-ln((|Re a| - |b|) / |c|)` when `|Re a| > |b|`, otherwise `+inf`.
pub fn sup_gamma2(p: &ScalarParams) -> ExtReal {
    let gap = p.a.re.abs() - p.b.norm();
    if gap > 0.0 {
        ExtReal::Finite(-(gap / p.c.norm()).ln())
    } else {
        ExtReal::PosInf
    }
}

/// `chi_2(omega, phi_1; 0) = -i omega + a + b e^{-i phi_1}`.
pub fn chi2_at_zero(p: &ScalarParams, omega: f64, phi1: f64) -> Complex64 {
    Complex64::new(0.0, -omega) + p.a + p.b * Complex64::from_polar(1.0, -phi1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularPhase {
    pub omega: f64,
    pub phi: f64,
    pub residual: f64,
}

/// Points `(omega_{1,2}, phi_{-+})` where `gamma^(2)` is `+inf`.
///
/// The phases solve `Re a + |b| cos(phi - Arg b) = 0` together with
/// `omega = Im a - |b| sin(phi - Arg b)`. Of the two candidate signs for
/// each arccos branch, the one with the smaller residual of
/// `chi_2(omega, phi; 0)` is kept. Phases are reduced to `[0, 2 pi)`.
pub fn phi_singular(p: &ScalarParams) -> Option<[SingularPhase; 2]> {
    let (w1, w2) = gamma1_zeros(p)?;
    let theta = (-p.a.re / p.b.norm()).clamp(-1.0, 1.0).acos();
    let solve = |omega: f64| -> SingularPhase {
        [theta, -theta]
            .into_iter()
            .map(|t| {
                let phi = (p.b.arg() + t).rem_euclid(2.0 * PI);
                SingularPhase {
                    omega,
                    phi,
                    residual: chi2_at_zero(p, omega, phi).norm(),
                }
            })
            .min_by(|x, y| x.residual.total_cmp(&y.residual))
            .unwrap()
    };
    Some([solve(w1), solve(w2)])
}

/// Verdict from the closed-form conditions.
///
/// Equalities (within [`EQUALITY_TOL`]) that leave the largest finite
/// supremum at zero give `Marginal`.
pub fn classify_scalar(p: &ScalarParams) -> StabilityVerdict {
    let re = p.a.re;
    let (b, c) = (p.b.norm(), p.c.norm());
    let sup1 = sup_gamma1(p);
    let sup2 = sup_gamma2(p);
    let estimates = vec![
        crate::classify::SupEstimate {
            k: 1,
            sup: sup1,
            argmax: Some((PhasePoint { omega: p.a.im, phi: vec![] }, 0)),
            uncertainty: 0.0,
            warnings: vec![],
        },
        crate::classify::SupEstimate {
            k: 2,
            sup: sup2,
            argmax: None,
            uncertainty: 0.0,
            warnings: vec![],
        },
    ];
    let verdict = |status, witness| StabilityVerdict {
        status,
        witness,
        sup_gammas: estimates.clone(),
        notes: vec![],
    };
    if re > EQUALITY_TOL {
        return verdict(
            Status::StronglyUnstable,
            Some(Witness::StrongEigenvalue { re: p.a.re, im: p.a.im }),
        );
    }
    if re.abs() <= EQUALITY_TOL {
        return verdict(Status::Marginal, None);
    }
    let gap = re.abs() - b;
    if gap < -EQUALITY_TOL {
        return verdict(
            Status::WeaklyUnstable(1),
            Some(Witness::Manifold {
                k: 1,
                point: PhasePoint { omega: p.a.im, phi: vec![] },
                branch: 0,
                gamma: sup1,
            }),
        );
    }
    if gap.abs() <= EQUALITY_TOL {
        return verdict(Status::WeaklyUnstable(2), None);
    }
    if c > gap + EQUALITY_TOL {
        let phi = p.b.arg().rem_euclid(2.0 * PI);
        verdict(
            Status::WeaklyUnstable(2),
            Some(Witness::Manifold {
                k: 2,
                point: PhasePoint { omega: omega_max(p, phi), phi: vec![phi] },
                branch: 0,
                gamma: sup2,
            }),
        )
    } else if c < gap - EQUALITY_TOL {
        verdict(Status::Stable, None)
    } else {
        verdict(Status::Marginal, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(a: Complex64, b: f64, cc: f64) -> ScalarParams {
        ScalarParams::new(a, c(b, 0.0), c(cc, 0.0)).unwrap()
    }

    #[test]
    fn gamma1_examples() {
        let p = params(c(-0.4, 0.5), 0.1, 0.3);
        assert!((gamma1(&p, 0.5).finite().unwrap() + 4f64.ln()).abs() < 1e-12);
        assert!(gamma1(&p, 50.0) < gamma1(&p, 5.0));
        let p = params(c(0.0, 0.5), 0.1, 0.3);
        assert_eq!(gamma1(&p, 0.5), ExtReal::PosInf);
    }

    #[test]
    fn gamma1_zero_examples() {
        let (w1, w2) = gamma1_zeros(&params(c(-0.4, 0.5), 0.5, 0.3)).unwrap();
        assert!((w1 - 0.2).abs() < 1e-12 && (w2 - 0.8).abs() < 1e-12);
        assert!(gamma1_zeros(&params(c(-0.4, 0.5), 0.1, 0.3)).is_none());
        let (w1, w2) = gamma1_zeros(&params(c(-0.5, 0.5), 0.5, 0.3)).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn gamma2_examples() {
        let p = params(c(-0.4, 0.5), 0.1, 0.3);
        assert!(gamma2(&p, omega_max(&p, 0.0), 0.0).finite().unwrap().abs() < 1e-12);
        let scaled = params(c(-0.4, 0.5), 0.1, 0.3 * 2f64.exp());
        let (g, gs) = (gamma2(&p, 0.7, 1.1).finite().unwrap(), gamma2(&scaled, 0.7, 1.1).finite().unwrap());
        assert!((gs - g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sup_examples() {
        let v = sup_gamma2(&params(c(-0.4, 0.5), 0.1, 0.4)).finite().unwrap();
        assert!((v - (4.0f64 / 3.0).ln()).abs() < 1e-14);
        assert!(sup_gamma2(&params(c(-0.4, 0.5), 0.1, 0.3)).finite().unwrap().abs() < 1e-15);
        assert_eq!(sup_gamma2(&params(c(-0.4, 0.5), 0.5, 0.3)), ExtReal::PosInf);
    }

    #[test]
    fn singular_phases_solve_the_ansatz() {
        for (a, b) in [(c(-0.4, 0.5), c(0.5, 0.0)), (c(-0.2, -1.0), c(0.3, 0.4)), (c(-0.1, 0.0), c(-0.2, 0.1))] {
            let p = ScalarParams::new(a, b, c(0.3, 0.0)).unwrap();
            let sp = phi_singular(&p).unwrap();
            let (w1, w2) = gamma1_zeros(&p).unwrap();
            assert_eq!((sp[0].omega, sp[1].omega), (w1, w2));
            for s in sp {
                assert!(s.residual <= 1e-12, "{s:?}");
                let g = gamma2(&p, s.omega, s.phi);
                assert!(g == ExtReal::PosInf || g > ExtReal::Finite(25.0), "{g:?}");
            }
        }
        assert!(phi_singular(&params(c(-0.4, 0.5), 0.1, 0.3)).is_none());
    }

    #[test]
    fn table_rows() {
        assert_eq!(classify_scalar(&params(c(-0.4, 0.5), 0.1, 0.2)).status, Status::Stable);
        assert_eq!(classify_scalar(&params(c(-0.4, 0.5), 0.1, 0.4)).status, Status::WeaklyUnstable(2));
        assert_eq!(classify_scalar(&params(c(-0.4, 0.5), 0.1, 0.3)).status, Status::Marginal);
        assert_eq!(classify_scalar(&params(c(-0.4, 0.5), 0.5, 0.3)).status, Status::WeaklyUnstable(1));
        assert_eq!(classify_scalar(&params(c(0.3, 0.0), 0.9, 0.01)).status, Status::StronglyUnstable);
        assert_eq!(classify_scalar(&params(c(0.0, 1.0), 0.1, 0.1)).status, Status::Marginal);
    }

    #[test]
    fn gamma1_maximum_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = c(-rng.gen_range(0.05..1.0), rng.gen_range(-1.0..1.0));
            let b = Complex64::from_polar(rng.gen_range(0.05..1.0), rng.gen_range(-3.0..3.0));
            let p = ScalarParams::new(a, b, c(1.0, 0.0)).unwrap();
            let best = (0..=2000)
                .map(|i| a.im - 2.0 + 4.0 * i as f64 / 2000.0)
                .map(|w| gamma1(&p, w).finite().unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let sup = sup_gamma1(&p).finite().unwrap();
            assert!(best <= sup + 1e-12 && sup - best < 1e-5);
            assert!((gamma1(&p, a.im).finite().unwrap() - sup).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma2_stationary_at_omega_max() {
        let p = ScalarParams::new(c(-0.4, 0.5), c(0.1, 0.05), c(0.3, 0.0)).unwrap();
        for i in 0..16 {
            let phi = i as f64 * 0.4;
            let w = omega_max(&p, phi);
            let h = 1e-5;
            let d = (gamma2(&p, w + h, phi).finite().unwrap() - gamma2(&p, w - h, phi).finite().unwrap()) / (2.0 * h);
            assert!(d.abs() < 1e-8);
            assert!(gamma2(&p, w + 0.1, phi) < gamma2(&p, w, phi));
        }
    }

    #[test]
    fn zero_parameters_are_rejected() {
        assert!(ScalarParams::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }
}
