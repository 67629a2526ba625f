//! Univariate complex polynomials recovered from point values.
//!
//! Determinant polynomials (`det(B + A Y)` in `Y`, `det(-lambda J + A)` in
//! `lambda`) are never expanded symbolically. They are sampled on a circle
//! and the coefficients are read off with a discrete Fourier transform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{eigenvalues, ComplexMatrix};

/// Coefficients in ascending order: `c[0] + c[1] z + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    /// Nominal degree (length minus one); leading coefficient may be zero.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * j as f64)
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Interpolates a polynomial of degree at most `degree` from its values
    /// at `degree + 1` equispaced points on the circle `|z| = radius`.
    pub fn interpolate_on_circle<F>(degree: usize, radius: f64, mut f: F) -> Result<Poly>
    where
        F: FnMut(Complex64) -> Result<Complex64>,
    {
        let m = degree + 1;
        let nodes: Vec<Complex64> = (0..m)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / m as f64))
            .collect();
        let values = nodes
            .iter()
            .map(|&w| f(w * radius))
            .collect::<Result<Vec<_>>>()?;
        let mut coeffs = Vec::with_capacity(m);
        for j in 0..m {
            let s: Complex64 = (0..m)
                .map(|i| values[i] * nodes[(i * j) % m].conj())
                .sum();
            coeffs.push(s / m as f64 / radius.powi(j as i32));
        }
        Ok(Poly::new(coeffs))
    }

    /// Drops leading coefficients whose size on `|z| = radius` is below
    /// `rel_tol` times the largest such size. Returns how many were dropped.
    pub fn trim_leading(&mut self, radius: f64, rel_tol: f64) -> usize {
        let scaled: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.norm() * radius.powi(j as i32))
            .collect();
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        let mut dropped = 0;
        while self.coeffs.len() > 1 && scaled[self.coeffs.len() - 1] <= rel_tol * max {
            self.coeffs.pop();
            dropped += 1;
        }
        dropped
    }

    /// Number of trailing (low-order) coefficients that vanish relative to
    /// the largest coefficient size on `|z| = radius`.
    pub fn zero_root_count(&self, radius: f64, rel_tol: f64) -> usize {
        let scaled: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.norm() * radius.powi(j as i32))
            .collect();
        let max = scaled.iter().cloned().fold(0.0, f64::max);
        scaled
            .iter()
            .take(self.degree())
            .take_while(|&&s| s <= rel_tol * max)
            .count()
    }

    /// All roots of the polynomial (leading coefficient must be nonzero).
    ///
    /// Companion-matrix eigenvalues of the polynomial rescaled to the circle
    /// `|z| = radius`, followed by two Newton polishing steps.
    pub fn roots(&self, radius: f64) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if n == 0 {
            return Ok(vec![]);
        }
        let scaled: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| c * radius.powi(j as i32))
            .collect();
        let lead = scaled[n];
        let mut comp = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -scaled[n - 1 - j] / lead;
        }
        for i in 1..n {
            comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        let dp = self.derivative();
        let roots = eigenvalues(&comp)?
            .into_iter()
            .map(|w| {
                let mut z = w * radius;
                for _ in 0..2 {
                    let d = dp.eval(z);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let step = self.eval(z) / d;
                    // Only accept steps that actually shrink the residual.
                    if (self.eval(z - step)).norm() < self.eval(z).norm() {
                        z -= step;
                    } else {
                        break;
                    }
                }
                z
            })
            .collect();
        Ok(roots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn interpolation_recovers_coefficients() {
        let p = Poly::new(vec![c(1.0, -2.0), c(0.5, 0.0), c(0.0, 3.0), c(-1.0, 1.0)]);
        let q = Poly::interpolate_on_circle(3, 1.7, |z| Ok(p.eval(z))).unwrap();
        for (a, b) in p.coeffs.iter().zip(&q.coeffs) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn trimming_removes_vanishing_leading_terms() {
        let mut p = Poly::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(1e-17, 0.0)]);
        assert_eq!(p.trim_leading(1.0, 1e-10), 1);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn roots_of_factored_cubic() {
        let r = [c(1.0, 0.0), c(0.0, -1.0), c(-2.0, 0.5)];
        // (z - r0)(z - r1)(z - r2)
        let mut coeffs = vec![c(1.0, 0.0)];
        for &root in &r {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (j, &a) in coeffs.iter().enumerate() {
                next[j + 1] += a;
                next[j] -= a * root;
            }
            coeffs = next;
        }
        let got = Poly::new(coeffs).roots(2.0).unwrap();
        for root in r {
            assert!(got.iter().any(|g| (g - root).norm() < 1e-12));
        }
    }

    #[test]
    fn zero_roots_are_counted() {
        let p = Poly::new(vec![c(0.0, 0.0), c(1e-20, 0.0), c(3.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(p.zero_root_count(1.0, 1e-14), 2);
    }
}
