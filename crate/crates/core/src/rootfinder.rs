//! Zeros of analytic functions in axis-aligned rectangles.
//!
//! Zeros are counted with the argument principle: the winding number of
//! `f` along the rectangle boundary, obtained by tracking the phase of `f`
//! between adaptively refined boundary samples. Rectangles are quadrisected
//! until each cell holds at most one zero (or is smaller than the
//! tolerance), then Newton's method polishes a root per cell.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CharFunction;

/// A function that is analytic on (a neighbourhood of) the search region.
pub trait Analytic: Sync {
    fn eval(&self, z: Complex64) -> Complex64;

    /// Exact derivative, if available. Otherwise a central difference is used.
    fn derivative(&self, _z: Complex64) -> Option<Complex64> {
        None
    }

    /// Bound on how fast the phase of the dominant terms turns per unit
    /// length (e.g. the largest delay for a quasi-polynomial). Seeds the
    /// boundary sampling density; refinement handles the rest.
    fn phase_rate(&self) -> f64 {
        0.0
    }
}

/// Adapts a closure (and optionally its derivative) to [`Analytic`].
pub struct FnAnalytic<F, G = fn(Complex64) -> Complex64> {
    f: F,
    df: Option<G>,
    rate: f64,
}

impl<F> FnAnalytic<F>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, df: None, rate: 0.0 }
    }
}

impl<F, G> FnAnalytic<F, G>
where
    F: Fn(Complex64) -> Complex64 + Sync,
    G: Fn(Complex64) -> Complex64 + Sync,
{
    pub fn with_derivative(f: F, df: G) -> Self {
        Self { f, df: Some(df), rate: 0.0 }
    }

    pub fn phase_rate_hint(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }
}

impl<F, G> Analytic for FnAnalytic<F, G>
where
    F: Fn(Complex64) -> Complex64 + Sync,
    G: Fn(Complex64) -> Complex64 + Sync,
{
    fn eval(&self, z: Complex64) -> Complex64 {
        (self.f)(z)
    }
    fn derivative(&self, z: Complex64) -> Option<Complex64> {
        self.df.as_ref().map(|d| d(z))
    }
    fn phase_rate(&self) -> f64 {
        self.rate
    }
}

impl Analytic for CharFunction<'_> {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.value_unchecked(z)
    }
    fn derivative(&self, z: Complex64) -> Option<Complex64> {
        Some(self.derivative_unchecked(z))
    }
    fn phase_rate(&self) -> f64 {
        self.taus().iter().sum::<f64>() + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rectangle {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let all_finite = [re_min, re_max, im_min, im_max].iter().all(|x| x.is_finite());
        if !all_finite || re_min >= re_max || im_min >= im_max {
            return Err(Error::Invalid(format!(
                "degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(Self { re_min, re_max, im_min, im_max })
    }

    /// Square of half-width `r` around `center`.
    pub fn around(center: Complex64, r: f64) -> Result<Self> {
        Self::new(center.re - r, center.re + r, center.im - r, center.im + r)
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    pub fn inflate(&self, by: f64) -> Self {
        Self {
            re_min: self.re_min - by,
            re_max: self.re_max + by,
            im_min: self.im_min - by,
            im_max: self.im_max + by,
        }
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    /// The four sub-rectangles obtained by cutting at the given fractions.
    fn split(&self, fx: f64, fy: f64) -> [Rectangle; 4] {
        let xm = self.re_min + fx * self.width();
        let ym = self.im_min + fy * self.height();
        [
            Rectangle { re_min: self.re_min, re_max: xm, im_min: self.im_min, im_max: ym },
            Rectangle { re_min: xm, re_max: self.re_max, im_min: self.im_min, im_max: ym },
            Rectangle { re_min: self.re_min, re_max: xm, im_min: ym, im_max: self.im_max },
            Rectangle { re_min: xm, re_max: self.re_max, im_min: ym, im_max: self.im_max },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootResult {
    pub location: Complex64,
    pub multiplicity: usize,
    /// `|f|` at the location.
    pub residual: f64,
    pub newton_converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RootFinderConfig {
    /// Newton step tolerance, smallest cell diagonal and merge radius.
    pub tol: f64,
    /// A boundary sample counts as a zero when `|f|` drops below this
    /// fraction of its neighbours.
    pub boundary_rel_tol: f64,
    pub max_depth: usize,
    pub newton_max_iter: usize,
    pub min_edge_samples: usize,
    pub inflate_retries: usize,
}

impl Default for RootFinderConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            boundary_rel_tol: 1e-13,
            max_depth: 40,
            newton_max_iter: 50,
            min_edge_samples: 16,
            inflate_retries: 3,
        }
    }
}

impl RootFinderConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

const MAX_STEP: f64 = FRAC_PI_4;

/// `arg(b / a)` without forming the quotient, which overflows for values
/// near the top of the double range.
fn phase_step(a: Complex64, b: Complex64) -> f64 {
    ((b / b.norm()) * (a / a.norm()).conj()).arg()
}

/// `a / b` with both operands rescaled first.
fn safe_div(a: Complex64, b: Complex64) -> Complex64 {
    let s = b.re.abs().max(b.im.abs());
    (a / s) / (b / s)
}

#[derive(Clone, Copy)]
struct Sample {
    z: Complex64,
    f: Complex64,
    /// Logarithmic derivative `f'/f`.
    g: Complex64,
}

struct EdgeTracer<'a, F: Analytic + ?Sized> {
    f: &'a F,
    cfg: &'a RootFinderConfig,
    evals: usize,
    budget: usize,
}

impl<F: Analytic + ?Sized> EdgeTracer<'_, F> {
    fn eval(&mut self, z: Complex64) -> Result<Sample> {
        self.evals += 1;
        if self.evals > self.budget {
            return Err(Error::Resolution(format!(
                "evaluation budget of {} exhausted near {z}",
                self.budget
            )));
        }
        let v = self.f.eval(z);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Resolution(format!("non-finite function value at {z}")));
        }
        if v.norm() == 0.0 {
            return Err(Error::BoundaryZero { re: z.re, im: z.im });
        }
        let g = safe_div(derivative_at(self.f, z), v);
        if !(g.re.is_finite() && g.im.is_finite()) {
            return Err(Error::Resolution(format!("non-finite derivative at {z}")));
        }
        Ok(Sample { z, f: v, g })
    }

    /// Phase change from `a` to `b`. A segment is accepted when the phase
    /// turns by at most `MAX_STEP` on each half, the halves agree with the
    /// whole, and `|f'/f|` at both ends is small enough that the phase
    /// cannot wrap around between samples (a zero close to the segment
    /// makes `|f'/f|` large and forces refinement).
    fn segment(&mut self, a: Sample, b: Sample, depth: usize) -> Result<f64> {
        let m = self.eval(0.5 * (a.z + b.z))?;
        if m.f.norm() <= self.cfg.boundary_rel_tol * a.f.norm().max(b.f.norm()) {
            return Err(Error::BoundaryZero { re: m.z.re, im: m.z.im });
        }
        let h = (b.z - a.z).norm();
        let d1 = phase_step(a.f, m.f);
        let d2 = phase_step(m.f, b.f);
        let rate = a.g.norm().max(b.g.norm()).max(m.g.norm());
        if d1.abs() <= MAX_STEP && d2.abs() <= MAX_STEP && rate * h <= 2.0 * MAX_STEP {
            let whole = phase_step(a.f, b.f);
            if (d1 + d2 - whole).abs() < 1e-9 {
                return Ok(d1 + d2);
            }
        }
        if depth >= self.cfg.max_depth {
            return Err(Error::Resolution(format!(
                "phase not resolved after {depth} bisections near {}",
                m.z
            )));
        }
        Ok(self.segment(a, m, depth + 1)? + self.segment(m, b, depth + 1)?)
    }
}

/// Continuous change of `arg f` along the straight segment `a -> b`.
///
/// Computed in a canonical direction so that an edge shared by two cells
/// contributes exactly opposite amounts to their winding numbers.
fn edge_phase<F: Analytic + ?Sized>(
    f: &F,
    a: Complex64,
    b: Complex64,
    cfg: &RootFinderConfig,
) -> Result<f64> {
    if (b.re, b.im) < (a.re, a.im) {
        return Ok(-edge_phase(f, b, a, cfg)?);
    }
    let len = (b - a).norm();
    let seeded = (len * f.phase_rate() / (0.5 * MAX_STEP)).ceil();
    let n = (cfg.min_edge_samples as f64).max(seeded).min(1e8) as usize;
    let mut tracer = EdgeTracer {
        f,
        cfg,
        evals: 0,
        budget: 8 * n + 200_000,
    };
    let mut total = 0.0;
    let mut s0 = tracer.eval(a)?;
    for i in 1..=n {
        let z1 = if i == n { b } else { a + (b - a) * (i as f64 / n as f64) };
        let s1 = tracer.eval(z1)?;
        total += tracer.segment(s0, s1, 0)?;
        s0 = s1;
    }
    Ok(total)
}

fn winding_number<F: Analytic + ?Sized>(f: &F, rect: &Rectangle, cfg: &RootFinderConfig) -> Result<usize> {
    let c = rect.corners();
    let mut total = 0.0;
    for i in 0..4 {
        total += edge_phase(f, c[i], c[(i + 1) % 4], cfg)?;
    }
    let w = total / (2.0 * PI);
    let rounded = w.round();
    if (w - rounded).abs() > 0.25 || rounded < 0.0 {
        return Err(Error::Resolution(format!(
            "winding number {w:.4} is not a non-negative integer"
        )));
    }
    Ok(rounded as usize)
}

/// Number of zeros (with multiplicity) inside `rect`, together with the
/// rectangle actually used (inflated if `f` vanished on the original boundary).
pub fn count_zeros_with<F: Analytic + ?Sized>(
    f: &F,
    rect: &Rectangle,
    cfg: &RootFinderConfig,
) -> Result<(usize, Rectangle)> {
    let mut current = *rect;
    let mut last_err = None;
    for _ in 0..=cfg.inflate_retries {
        match winding_number(f, &current, cfg) {
            Ok(n) => return Ok((n, current)),
            Err(e @ (Error::BoundaryZero { .. } | Error::Resolution(_))) => {
                last_err = Some(e);
                current = current.inflate(1e-6 * rect.diagonal());
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

pub fn count_zeros<F: Analytic + ?Sized>(f: &F, rect: &Rectangle) -> Result<usize> {
    count_zeros_with(f, rect, &RootFinderConfig::default()).map(|(n, _)| n)
}

fn derivative_at<F: Analytic + ?Sized>(f: &F, z: Complex64) -> Complex64 {
    f.derivative(z).unwrap_or_else(|| {
        let h = 1e-7 * (1.0 + z.norm());
        (f.eval(z + h) - f.eval(z - h)) / (2.0 * h)
    })
}

/// Newton iteration `z <- z - m f / f'` from the cell centre. Returns the
/// final point and whether the step size fell below `tol` inside `cell`.
fn newton_in_cell<F: Analytic + ?Sized>(
    f: &F,
    cell: &Rectangle,
    multiplicity: usize,
    cfg: &RootFinderConfig,
) -> (Complex64, bool) {
    let allowed = cell.inflate(cfg.tol + 1e-9 * cell.diagonal());
    let mut z = cell.center();
    for _ in 0..cfg.newton_max_iter {
        let fz = f.eval(z);
        if fz.norm() == 0.0 {
            return (z, true);
        }
        let d = derivative_at(f, z);
        if d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite() {
            return (z, false);
        }
        let step = safe_div(fz, d) * multiplicity as f64;
        z -= step;
        if !allowed.contains(z) {
            return (z, false);
        }
        if step.norm() < cfg.tol {
            return (z, true);
        }
    }
    (z, false)
}

const SPLIT_FRACTIONS: [(f64, f64); 4] = [(0.5, 0.5), (0.5731, 0.4387), (0.4219, 0.5613), (0.6373, 0.3541)];

fn subdivide<F: Analytic + ?Sized>(
    f: &F,
    cell: &Rectangle,
    count: usize,
    cfg: &RootFinderConfig,
) -> Option<Vec<(Rectangle, usize)>> {
    'attempt: for &(fx, fy) in &SPLIT_FRACTIONS {
        let children = cell.split(fx, fy);
        let mut out = Vec::with_capacity(4);
        for child in children {
            match winding_number(f, &child, cfg) {
                Ok(n) => out.push((child, n)),
                Err(_) => continue 'attempt,
            }
        }
        if out.iter().map(|c| c.1).sum::<usize>() == count {
            return Some(out);
        }
    }
    None
}

fn leaf<F: Analytic + ?Sized>(f: &F, cell: &Rectangle, count: usize, cfg: &RootFinderConfig) -> RootResult {
    let (z, ok) = newton_in_cell(f, cell, count, cfg);
    let location = if ok { z } else { cell.center() };
    RootResult {
        location,
        multiplicity: count,
        residual: f.eval(location).norm(),
        newton_converged: ok,
    }
}

fn process<F: Analytic + ?Sized>(
    f: &F,
    cell: Rectangle,
    count: usize,
    depth: usize,
    cfg: &RootFinderConfig,
) -> Vec<RootResult> {
    if count == 0 {
        return vec![];
    }
    let small = cell.diagonal() < cfg.tol || depth >= cfg.max_depth;
    if count == 1 {
        let (z, ok) = newton_in_cell(f, &cell, 1, cfg);
        if ok && cell.inflate(cfg.tol).contains(z) {
            return vec![RootResult {
                location: z,
                multiplicity: 1,
                residual: f.eval(z).norm(),
                newton_converged: true,
            }];
        }
        if small {
            return vec![leaf(f, &cell, 1, cfg)];
        }
    } else if small {
        return vec![leaf(f, &cell, count, cfg)];
    }
    let Some(children) = subdivide(f, &cell, count, cfg) else {
        return vec![leaf(f, &cell, count, cfg)];
    };
    use rayon::prelude::*;
    children
        .into_par_iter()
        .flat_map_iter(|(c, n)| process(f, c, n, depth + 1, cfg))
        .collect()
}

/// Merges roots closer than `radius`, summing multiplicities, and sorts by
/// (re, im).
fn merge_roots<F: Analytic + ?Sized>(f: &F, mut roots: Vec<RootResult>, radius: f64) -> Vec<RootResult> {
    roots.sort_by(|a, b| {
        (a.location.re, a.location.im)
            .partial_cmp(&(b.location.re, b.location.im))
            .unwrap()
    });
    let mut out: Vec<RootResult> = Vec::with_capacity(roots.len());
    for r in roots {
        if let Some(prev) = out
            .iter_mut()
            .rev()
            .take_while(|p| r.location.re - p.location.re <= radius)
            .find(|p| (p.location - r.location).norm() <= radius)
        {
            let m = (prev.multiplicity + r.multiplicity) as f64;
            prev.location = (prev.location * prev.multiplicity as f64
                + r.location * r.multiplicity as f64)
                / m;
            prev.multiplicity += r.multiplicity;
            prev.newton_converged &= r.newton_converged;
            prev.residual = f.eval(prev.location).norm();
        } else {
            out.push(r);
        }
    }
    out.sort_by(|a, b| {
        (a.location.re, a.location.im)
            .partial_cmp(&(b.location.re, b.location.im))
            .unwrap()
    });
    out
}

/// All zeros of `f` inside `rect`, with multiplicities.
///
/// The total multiplicity of the returned roots always equals the winding
/// number of `f` along the (possibly inflated) boundary.
pub fn find_roots_with<F: Analytic + ?Sized>(
    f: &F,
    rect: &Rectangle,
    cfg: &RootFinderConfig,
) -> Result<Vec<RootResult>> {
    let (count, used) = count_zeros_with(f, rect, cfg)?;
    let roots = process(f, used, count, 0, cfg);
    Ok(merge_roots(f, roots, cfg.tol))
}

pub fn find_roots<F: Analytic + ?Sized>(f: &F, rect: &Rectangle, tol: f64) -> Result<Vec<RootResult>> {
    find_roots_with(f, rect, &RootFinderConfig::with_tol(tol))
}
