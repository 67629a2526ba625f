//! Run configuration and the workflows behind the command line: spectra in
//! a window, spectral manifold samples, stability verdicts, validation of
//! the asymptotic spectra against computed eigenvalues, and presets for
//! the scalar two-delay example.
//!
//! Point clouds are written as CSV with 17 significant digits, reports and
//! verdicts as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, sup_gamma, SearchConfig, StabilityVerdict, SupEstimate, DEFAULT_MARGIN};
use crate::degeneracy::{build_ladder, strong_stable_spectrum, DegeneracyLadder};
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::manifolds::{
    rescale, sample_level, strong_spectrum, write_samples_csv, AsymptoticSet, ExtReal, LevelSystem, ManifoldGrid,
    ManifoldSample, StrongSpectrum,
};
use crate::model::{delays, CharFunction, DelaySystem, Epsilon, GUARD_LIMIT};
use crate::rootfinder::{find_roots_with, Rectangle, RootFinderConfig, RootResult};
use crate::scalar2::{self, ScalarParams};

/// Fixed float formatting for CSV output: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub omega: Option<usize>,
    #[serde(default)]
    pub phase: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

/// Run configuration, read from JSON.
///
/// ```json
/// {
///   "system": { "d": 1, "n": 2, "sigma": [1, 1], "A0": [[[-0.4, 0.5]]], "A1": [[[0.1, 0]]], "A2": [[[0.4, 0]]] },
///   "eps": [0.05, 0.02],
///   "window": [-0.05, 0.05, -3, 3],
///   "grid": { "omega": 401, "phase": 64 },
///   "tol": 1e-10,
///   "output": { "dir": "out", "format": "csv" }
/// }
/// ```
///
/// `system_file` (a path relative to the config file) may replace `system`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<DelaySystem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_file: Option<PathBuf>,
    #[serde(default)]
    pub eps: Vec<Epsilon>,
    /// `[re_min, re_max, im_min, im_max]`; chosen per eps when absent.
    #[serde(default)]
    pub window: Option<[f64; 4]>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Bound on `|Re lambda|` checked for the pseudo-continuous eigenvalues
    /// at the smallest eps during validation.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Eigenvalues farther than this from every asymptotic set are flagged.
    #[serde(default)]
    pub distance_cap: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn for_system(sys: DelaySystem, eps: &[f64]) -> Result<Self> {
        Ok(Self {
            system: Some(sys),
            system_file: None,
            eps: eps.iter().map(|&e| Epsilon::new(e)).collect::<Result<_>>()?,
            window: None,
            grid: GridSpec::default(),
            tol: default_tol(),
            rank_tol: default_rank_tol(),
            margin: default_margin(),
            delta: None,
            distance_cap: None,
            output: OutputSpec::default(),
        })
    }

    /// Parses a config file and inlines `system_file`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.resolve(path.parent())
    }

    pub fn resolve(mut self, base: Option<&Path>) -> Result<Self> {
        if let Some(file) = self.system_file.take() {
            if self.system.is_some() {
                return Err(Error::Config("give either system or system_file, not both".into()));
            }
            let full = match base {
                Some(b) if file.is_relative() => b.join(&file),
                _ => file.clone(),
            };
            let text = fs::read_to_string(&full)
                .map_err(|e| Error::Config(format!("cannot read system file {}: {e}", full.display())))?;
            self.system = Some(
                DelaySystem::from_json_str(&text)
                    .map_err(|e| Error::Config(format!("invalid system file {}: {e}", full.display())))?,
            );
        }
        Ok(self)
    }

    pub fn system(&self) -> Result<&DelaySystem> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::Config("no system given (system or system_file)".into()))
    }

    /// Checks the invariants needed by the eigenvalue workflows.
    pub fn validate_for_spectrum(&self) -> Result<()> {
        self.system()?;
        if self.eps.is_empty() {
            return Err(Error::Config("eps list is empty".into()));
        }
        if self.eps.windows(2).any(|w| w[1].value() >= w[0].value()) {
            return Err(Error::Config("eps list must be strictly decreasing".into()));
        }
        if let Some(w) = self.window {
            Rectangle::new(w[0], w[1], w[2], w[3]).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn search_config(&self, sys: &DelaySystem) -> SearchConfig {
        SearchConfig {
            grid: Some(self.manifold_grid(sys)),
            margin: self.margin,
            ..SearchConfig::default()
        }
    }

    pub fn manifold_grid(&self, sys: &DelaySystem) -> ManifoldGrid {
        ManifoldGrid::default_for(sys).with_resolution(self.grid.omega, self.grid.phase)
    }

    fn root_config(&self) -> RootFinderConfig {
        RootFinderConfig::with_tol(self.tol)
    }
}

/// Window searched at `eps` when none is configured: a strip
/// `|Re lambda| <= 10 eps^n (1 + |sup gamma^(n)|)` over the frequency bound,
/// kept inside the evaluation guard, plus squares of half-width `r` around
/// the strong unstable eigenvalues.
pub fn default_windows(
    sys: &DelaySystem,
    eps: Epsilon,
    sup_n: ExtReal,
    strong: &StrongSpectrum,
) -> Result<Vec<Rectangle>> {
    let taus = delays(sys, eps)?;
    let tau_max = taus.iter().cloned().fold(0.0, f64::max);
    let cap = 0.95 * GUARD_LIMIT / tau_max;
    let from_sup = match sup_n {
        ExtReal::Finite(s) => 10.0 * eps.value().powi(sys.n() as i32) * (1.0 + s.abs()),
        _ => cap,
    };
    let half = from_sup.min(cap);
    let w = sys.frequency_bound();
    let mut out = vec![Rectangle::new(-half, half, -w, w)?];
    for mu in &strong.s0_plus {
        if strong.r > 0.0 {
            let r = strong.r.min(0.95 * GUARD_LIMIT / tau_max / 2.0).min(mu.re);
            out.push(Rectangle::around(*mu, r.max(1e-6))?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRecord {
    pub eps: f64,
    pub windows: Vec<Rectangle>,
    pub roots: Vec<RootResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub records: Vec<SpectrumRecord>,
}

fn dedupe(mut roots: Vec<RootResult>, tol: f64) -> Vec<RootResult> {
    roots.sort_by(|a, b| (a.location.re, a.location.im).partial_cmp(&(b.location.re, b.location.im)).unwrap());
    let mut out: Vec<RootResult> = vec![];
    for r in roots {
        if !out.iter().any(|p| (p.location - r.location).norm() <= tol.max(1e-9)) {
            out.push(r);
        }
    }
    out
}

fn spectrum_for_eps(
    sys: &DelaySystem,
    eps: Epsilon,
    windows: &[Rectangle],
    cfg: &RootFinderConfig,
) -> Result<Vec<RootResult>> {
    let f = CharFunction::new(sys, eps)?;
    let mut roots = vec![];
    for w in windows {
        f.check_window(w.re_min, w.re_max)?;
        roots.extend(find_roots_with(&f, w, cfg)?);
    }
    Ok(dedupe(roots, cfg.tol))
}

/// Eigenvalues in the window for every eps of the config.
pub fn run_spectrum(cfg: &RunConfig) -> Result<SpectrumResult> {
    cfg.validate_for_spectrum()?;
    let sys = cfg.system()?;
    let auto = if cfg.window.is_none() {
        Some((sup_gamma(sys, sys.n(), &cfg.search_config(sys))?.sup, strong_spectrum(sys)?))
    } else {
        None
    };
    let mut records = vec![];
    for &eps in &cfg.eps {
        let windows = match (cfg.window, &auto) {
            (Some(w), _) => vec![Rectangle::new(w[0], w[1], w[2], w[3])?],
            (None, Some((sup, strong))) => default_windows(sys, eps, *sup, strong)?,
            (None, None) => unreachable!(),
        };
        let roots = spectrum_for_eps(sys, eps, &windows, &cfg.root_config())?;
        records.push(SpectrumRecord {
            eps: eps.value(),
            windows,
            roots,
        });
    }
    Ok(SpectrumResult { records })
}

impl SpectrumResult {
    /// CSV with columns `eps, re, im, multiplicity, residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "re", "im", "multiplicity", "residual"])?;
        for rec in &self.records {
            for r in &rec.roots {
                w.write_record([
                    fmt_float(rec.eps),
                    fmt_float(r.location.re),
                    fmt_float(r.location.im),
                    r.multiplicity.to_string(),
                    fmt_float(r.residual),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        match format {
            Format::Csv => {
                let path = dir.join("spectrum.csv");
                self.write_csv(fs::File::create(&path)?)?;
                Ok(path)
            }
            Format::Json => write_json(&dir.join("spectrum.json"), self),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunnerUp {
    pub scale: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assignment {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    /// 0 for the strong spectrum, otherwise the delay scale `k`.
    pub scale: usize,
    pub rescaled: [f64; 2],
    pub distance: f64,
    pub runner_up: Option<RunnerUp>,
    /// Farther than the configured cap from every asymptotic set.
    pub unassigned: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongMatch {
    pub candidate: [f64; 2],
    /// Eigenvalues (with multiplicity) within `r` of the candidate.
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationRecord {
    pub eps: f64,
    pub eigenvalue_count: usize,
    pub assignments: Vec<Assignment>,
    /// Largest assigned distance per scale (keys are scales).
    pub max_distance: BTreeMap<usize, f64>,
    pub strong_matches: Vec<StrongMatch>,
    /// Largest `|Re lambda|` among eigenvalues outside the strong spectrum.
    pub max_abs_re_pseudo: f64,
    pub delta_satisfied: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleConvergence {
    pub scale: usize,
    /// `(eps, max distance)` in decreasing eps order.
    pub max_distances: Vec<(f64, f64)>,
    /// Each distance is at most twice the previous one.
    pub nonincreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub records: Vec<ValidationRecord>,
    pub convergence: Vec<ScaleConvergence>,
    pub strong_radius: f64,
    pub notes: Vec<String>,
}

/// Everything needed to assign eigenvalues to asymptotic sets.
pub struct Assigner {
    sets: Vec<AsymptoticSet>,
    strong: Vec<Complex64>,
    r: f64,
    cap: f64,
}

impl Assigner {
    pub fn new(
        sys: &DelaySystem,
        ladder: &DegeneracyLadder,
        grid: &ManifoldGrid,
        strong: &StrongSpectrum,
        cap: f64,
    ) -> Result<Self> {
        let sets = (1..=sys.n())
            .map(|k| AsymptoticSet::new(sys, ladder, k, grid))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates = strong.s0_plus.clone();
        candidates.extend(strong_stable_spectrum(ladder)?);
        Ok(Self {
            sets,
            strong: candidates,
            r: strong.r,
            cap,
        })
    }

    pub fn strong_candidates(&self) -> &[Complex64] {
        &self.strong
    }

    pub fn assign(&self, eps: Epsilon, root: &RootResult) -> Result<Assignment> {
        let z = root.location;
        let base = |scale, rescaled: Complex64, distance, runner_up| Assignment {
            re: z.re,
            im: z.im,
            multiplicity: root.multiplicity,
            scale,
            rescaled: [rescaled.re, rescaled.im],
            distance,
            runner_up,
            unassigned: false,
        };
        if let Some((mu, d)) = self
            .strong
            .iter()
            .map(|mu| (mu, (z - mu).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            if d < self.r {
                let _ = mu;
                return Ok(base(0, z, d, None));
            }
        }
        let mut scored: Vec<(usize, Complex64, f64)> = vec![];
        for set in &self.sets {
            let w = rescale(eps, set.k(), z);
            if let Some(d) = set.distance(w)? {
                scored.push((set.k(), w, d));
            }
        }
        scored.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let Some(&(k, w, d)) = scored.first() else {
            let mut a = base(0, z, f64::INFINITY, None);
            a.unassigned = true;
            return Ok(a);
        };
        let runner_up = scored.get(1).map(|&(k2, _, d2)| RunnerUp { scale: k2, distance: d2 });
        let mut a = base(k, w, d, runner_up);
        a.unassigned = d > self.cap;
        Ok(a)
    }
}

fn validation_grid(cfg: &RunConfig, sys: &DelaySystem, im_min: f64, im_max: f64) -> ManifoldGrid {
    let g = cfg.manifold_grid(sys);
    let spacing = (g.omega_max - g.omega_min) / (g.n_omega.max(2) - 1) as f64;
    let lo = g.omega_min.min(im_min);
    let hi = g.omega_max.max(im_max);
    let n = (((hi - lo) / spacing).ceil() as usize + 1).max(g.n_omega);
    ManifoldGrid {
        omega_min: lo,
        omega_max: hi,
        n_omega: n,
        ..g
    }
}

/// Locates eigenvalues for each eps and assigns each to the strong
/// spectrum or to the scale `k` whose rescaled asymptotic set is nearest.
pub fn run_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let spectrum = run_spectrum(cfg)?;
    let sys = cfg.system()?;
    let ladder = build_ladder(sys, cfg.rank_tol)?;
    let mut notes = ladder.warnings.clone();
    if !ladder.nd_satisfied {
        notes.push("Condition (ND) fails; asymptotic sets are not meaningful".into());
    }
    let strong = strong_spectrum(sys)?;
    let (im_min, im_max) = spectrum
        .records
        .iter()
        .flat_map(|r| r.windows.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, w| (acc.0.min(w.im_min), acc.1.max(w.im_max)));
    let grid = validation_grid(cfg, sys, im_min, im_max);
    let cap = cfg.distance_cap.unwrap_or(1.0);
    let assigner = Assigner::new(sys, &ladder, &grid, &strong, cap)?;
    let smallest = cfg.eps.last().map(|e| e.value());

    let mut records = vec![];
    for rec in &spectrum.records {
        let eps = Epsilon::new(rec.eps)?;
        use rayon::prelude::*;
        let assignments: Vec<Assignment> = rec
            .roots
            .par_iter()
            .map(|r| assigner.assign(eps, r))
            .collect::<Result<_>>()?;
        let mut max_distance = BTreeMap::new();
        for a in assignments.iter().filter(|a| !a.unassigned) {
            let e = max_distance.entry(a.scale).or_insert(0.0f64);
            *e = e.max(a.distance);
        }
        let strong_matches = assigner
            .strong_candidates()
            .iter()
            .map(|mu| StrongMatch {
                candidate: [mu.re, mu.im],
                count: rec
                    .roots
                    .iter()
                    .filter(|r| (r.location - mu).norm() < strong.r)
                    .map(|r| r.multiplicity)
                    .sum(),
            })
            .collect();
        let max_abs_re_pseudo = assignments
            .iter()
            .filter(|a| a.scale != 0)
            .map(|a| a.re.abs())
            .fold(0.0, f64::max);
        let delta_satisfied = match (cfg.delta, smallest) {
            (Some(d), Some(s)) if s == rec.eps => Some(max_abs_re_pseudo < d),
            _ => None,
        };
        records.push(ValidationRecord {
            eps: rec.eps,
            eigenvalue_count: rec.roots.iter().map(|r| r.multiplicity).sum(),
            assignments,
            max_distance,
            strong_matches,
            max_abs_re_pseudo,
            delta_satisfied,
        });
    }
    let scales: std::collections::BTreeSet<usize> =
        records.iter().flat_map(|r| r.max_distance.keys().copied()).collect();
    let convergence = scales
        .into_iter()
        .map(|k| {
            let seq: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| r.max_distance.get(&k).map(|&d| (r.eps, d)))
                .collect();
            let nonincreasing = seq.windows(2).all(|w| w[1].1 <= 2.0 * w[0].1);
            ScaleConvergence {
                scale: k,
                max_distances: seq,
                nonincreasing,
            }
        })
        .collect();
    Ok(ValidationReport {
        records,
        convergence,
        strong_radius: strong.r,
        notes,
    })
}

impl ValidationReport {
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = vec![write_json(&dir.join("validation.json"), self)?];
        if format == Format::Csv {
            let path = dir.join("assignments.csv");
            let mut w = csv::Writer::from_writer(fs::File::create(&path)?);
            w.write_record([
                "eps",
                "re",
                "im",
                "multiplicity",
                "scale",
                "rescaled_re",
                "rescaled_im",
                "distance",
                "runner_up_scale",
                "runner_up_distance",
                "unassigned",
            ])?;
            for rec in &self.records {
                for a in &rec.assignments {
                    w.write_record([
                        fmt_float(rec.eps),
                        fmt_float(a.re),
                        fmt_float(a.im),
                        a.multiplicity.to_string(),
                        a.scale.to_string(),
                        fmt_float(a.rescaled[0]),
                        fmt_float(a.rescaled[1]),
                        fmt_float(a.distance),
                        a.runner_up.as_ref().map_or(String::new(), |r| r.scale.to_string()),
                        a.runner_up.as_ref().map_or(String::new(), |r| fmt_float(r.distance)),
                        a.unassigned.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            paths.push(path);
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldResult {
    pub n: usize,
    pub samples: Vec<ManifoldSample>,
}

/// Samples of every spectral manifold `gamma^(1..=n)` and of the projected
/// families provided by the degeneracy ladder.
pub fn run_manifolds(cfg: &RunConfig) -> Result<ManifoldResult> {
    let sys = cfg.system()?;
    let grid = cfg.manifold_grid(sys);
    let ladder = build_ladder(sys, cfg.rank_tol)?;
    let mut samples = vec![];
    for k in 1..=sys.n() {
        samples.extend(sample_level(&LevelSystem::full(sys, k)?, &grid)?);
        if let Some(t) = LevelSystem::tilde(sys, &ladder, k)? {
            samples.extend(sample_level(&t, &grid)?);
        }
    }
    Ok(ManifoldResult { n: sys.n(), samples })
}

impl ManifoldResult {
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        match format {
            Format::Csv => {
                let path = dir.join("manifolds.csv");
                write_samples_csv(fs::File::create(&path)?, self.n, &self.samples)?;
                Ok(path)
            }
            Format::Json => write_json(&dir.join("manifolds.json"), self),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyResult {
    pub verdict: StabilityVerdict,
    pub ladder: DegeneracyLadder,
}

/// Stability verdict; fails with a non-degeneracy error if (ND) does not hold.
pub fn run_classify(cfg: &RunConfig) -> Result<ClassifyResult> {
    let sys = cfg.system()?;
    let ladder = build_ladder(sys, cfg.rank_tol)?;
    let verdict = classify(sys, &ladder, cfg.margin, &cfg.search_config(sys))?;
    Ok(ClassifyResult { verdict, ladder })
}

impl ClassifyResult {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let verdict = write_json(&dir.join("verdict.json"), &self.verdict)?;
        let ladder = dir.join("ladder.txt");
        fs::write(&ladder, self.ladder.dump())?;
        Ok(vec![verdict, ladder])
    }
}

/// Names accepted by [`run_example`].
pub const EXAMPLES: [&str; 4] = ["fig2-stable", "fig2-neutral", "fig2-unstable", "fig3"];

/// Parameters `(a, b, c)` of the scalar presets.
pub fn example_params(name: &str) -> Result<ScalarParams> {
    let a = Complex64::new(-0.4, 0.5);
    let real = |x: f64| Complex64::new(x, 0.0);
    let (b, c) = match name {
        "fig2-stable" => (0.1, 0.2),
        "fig2-neutral" => (0.1, 0.3),
        "fig2-unstable" => (0.1, 0.4),
        "fig3" => (0.5, 0.3),
        other => {
            return Err(Error::Config(format!(
                "unknown example '{other}' (expected one of {})",
                EXAMPLES.join(", ")
            )))
        }
    };
    ScalarParams::new(a, real(b), real(c))
}

/// The scalar preset as a delay system with `sigma = (1, 1)`.
pub fn example_system(name: &str) -> Result<DelaySystem> {
    let p = example_params(name)?;
    DelaySystem::scalar(&[p.a, p.b, p.c], &[1.0, 1.0])
}

#[derive(Debug, Clone, Serialize)]
pub struct SupComparison {
    pub k: usize,
    pub closed_form: ExtReal,
    pub general: ExtReal,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub omega: f64,
    pub phi: Option<f64>,
    pub closed_form: ExtReal,
    pub general: ExtReal,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleReport {
    pub name: String,
    pub params: ScalarParams,
    pub closed_form_verdict: StabilityVerdict,
    pub general_verdict: StabilityVerdict,
    pub sups: Vec<SupComparison>,
    pub max_sup_discrepancy: f64,
    pub gamma1_curve: Vec<CurvePoint>,
    pub gamma2_surface: Vec<CurvePoint>,
    /// Largest difference between the closed forms and the general
    /// manifolds over the finite curve and surface samples.
    pub max_sample_discrepancy: f64,
    pub singular_phases: Option<[scalar2::SingularPhase; 2]>,
}

fn discrepancy(a: ExtReal, b: ExtReal) -> f64 {
    match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => (x - y).abs(),
        (x, y) if x == y => 0.0,
        _ => f64::INFINITY,
    }
}

/// Closed-form and general results for a scalar preset, side by side.
pub fn run_example(name: &str, grid: Option<(usize, usize)>) -> Result<ExampleReport> {
    let p = example_params(name)?;
    let sys = example_system(name)?;
    let mut g = ManifoldGrid::default_for(&sys);
    if let Some((no, np)) = grid {
        g = g.with_resolution(Some(no), Some(np));
    }
    let cfg = SearchConfig {
        grid: Some(g),
        ..SearchConfig::default()
    };
    let ladder = build_ladder(&sys, DEFAULT_RANK_TOL)?;
    let general_verdict = classify(&sys, &ladder, DEFAULT_MARGIN, &cfg)?;
    let closed = [scalar2::sup_gamma1(&p), scalar2::sup_gamma2(&p)];
    let sups: Vec<SupComparison> = general_verdict
        .sup_gammas
        .iter()
        .map(|s: &SupEstimate| SupComparison {
            k: s.k,
            closed_form: closed[s.k - 1],
            general: s.sup,
            discrepancy: discrepancy(closed[s.k - 1], s.sup),
        })
        .collect();
    let max_sup_discrepancy = sups.iter().map(|s| s.discrepancy).fold(0.0, f64::max);

    let level1 = LevelSystem::full(&sys, 1)?;
    let level2 = LevelSystem::full(&sys, 2)?;
    let mut gamma1_curve = vec![];
    for pt in g.points(sys.sigmas(), 1) {
        let general = level1.max_gamma(&pt)?;
        gamma1_curve.push(CurvePoint {
            omega: pt.omega,
            phi: None,
            closed_form: scalar2::gamma1(&p, pt.omega),
            general,
        });
    }
    let mut gamma2_surface = vec![];
    for pt in g.points(sys.sigmas(), 2) {
        let general = level2.max_gamma(&pt)?;
        gamma2_surface.push(CurvePoint {
            omega: pt.omega,
            phi: Some(pt.phi[0]),
            closed_form: scalar2::gamma2(&p, pt.omega, pt.phi[0]),
            general,
        });
    }
    let max_sample_discrepancy = gamma1_curve
        .iter()
        .chain(&gamma2_surface)
        .filter(|c| c.closed_form.is_finite() && c.general.is_finite())
        .map(|c| discrepancy(c.closed_form, c.general))
        .fold(0.0, f64::max);
    Ok(ExampleReport {
        name: name.to_string(),
        params: p,
        closed_form_verdict: scalar2::classify_scalar(&p),
        general_verdict,
        sups,
        max_sup_discrepancy,
        gamma1_curve,
        gamma2_surface,
        max_sample_discrepancy,
        singular_phases: scalar2::phi_singular(&p),
    })
}

impl ExampleReport {
    /// `example.json` with the comparison (curves omitted) plus, for CSV
    /// output, `gamma1.csv` and `gamma2.csv` with both evaluations.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = vec![];
        match format {
            Format::Json => paths.push(write_json(&dir.join("example.json"), self)?),
            Format::Csv => {
                #[derive(Serialize)]
                struct Summary<'a> {
                    name: &'a str,
                    params: &'a ScalarParams,
                    closed_form_verdict: &'a StabilityVerdict,
                    general_verdict: &'a StabilityVerdict,
                    sups: &'a [SupComparison],
                    max_sup_discrepancy: f64,
                    max_sample_discrepancy: f64,
                    singular_phases: &'a Option<[scalar2::SingularPhase; 2]>,
                }
                paths.push(write_json(
                    &dir.join("example.json"),
                    &Summary {
                        name: &self.name,
                        params: &self.params,
                        closed_form_verdict: &self.closed_form_verdict,
                        general_verdict: &self.general_verdict,
                        sups: &self.sups,
                        max_sup_discrepancy: self.max_sup_discrepancy,
                        max_sample_discrepancy: self.max_sample_discrepancy,
                        singular_phases: &self.singular_phases,
                    },
                )?);
                let p1 = dir.join("gamma1.csv");
                let mut w = csv::Writer::from_writer(fs::File::create(&p1)?);
                w.write_record(["omega", "gamma_closed_form", "gamma_general"])?;
                for c in &self.gamma1_curve {
                    w.write_record([fmt_float(c.omega), c.closed_form.to_string(), c.general.to_string()])?;
                }
                w.flush()?;
                paths.push(p1);
                let p2 = dir.join("gamma2.csv");
                let mut w = csv::Writer::from_writer(fs::File::create(&p2)?);
                w.write_record(["omega", "phi_1", "gamma_closed_form", "gamma_general"])?;
                for c in &self.gamma2_surface {
                    w.write_record([
                        fmt_float(c.omega),
                        fmt_float(c.phi.unwrap_or(0.0)),
                        c.closed_form.to_string(),
                        c.general.to_string(),
                    ])?;
                }
                w.flush()?;
                paths.push(p2);
                if let Some(sp) = &self.singular_phases {
                    let p3 = dir.join("singular_phases.csv");
                    let mut w = csv::Writer::from_writer(fs::File::create(&p3)?);
                    w.write_record(["omega", "phi_1", "residual"])?;
                    for s in sp {
                        w.write_record([fmt_float(s.omega), fmt_float(s.phi), fmt_float(s.residual)])?;
                    }
                    w.flush()?;
                    paths.push(p3);
                }
            }
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn config_parses_and_validates() {
        let text = r#"{
            "system": {"d": 1, "n": 1, "sigma": [1.0], "A0": [[[0.0, 0.0]]], "A1": [[[1.0, 0.0]]]},
            "eps": [1.0],
            "window": [0.0, 1.0, -1.0, 1.0],
            "output": {"format": "json"}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate_for_spectrum().unwrap();
        assert_eq!(cfg.output.format, Format::Json);
        assert_eq!(cfg.tol, 1e-10);

        let mut bad = cfg.clone();
        bad.eps = vec![Epsilon::new(0.1).unwrap(), Epsilon::new(0.2).unwrap()];
        assert!(matches!(bad.validate_for_spectrum(), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.eps.clear();
        assert!(matches!(bad.validate_for_spectrum(), Err(Error::Config(_))));
        let mut bad = cfg;
        bad.window = Some([1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(bad.validate_for_spectrum(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<RunConfig>(r#"{"eps": [2.0]}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"eps": [0.1], "bogus": 1}"#).is_err());
    }

    #[test]
    fn lambert_spectrum() {
        let sys = DelaySystem::scalar(&[c(0.0, 0.0), c(1.0, 0.0)], &[1.0]).unwrap();
        let mut cfg = RunConfig::for_system(sys, &[1.0]).unwrap();
        cfg.window = Some([0.0, 1.0, -1.0, 1.0]);
        let res = run_spectrum(&cfg).unwrap();
        assert_eq!(res.records[0].roots.len(), 1);
        assert!((res.records[0].roots[0].location - c(0.567_143_290_409_783_8, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn empty_window_gives_header_only() {
        let sys = example_system("fig2-stable").unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.1]).unwrap();
        cfg.window = Some([5.0, 6.0, 0.0, 1.0]);
        let res = run_spectrum(&cfg).unwrap();
        let mut buf = vec![];
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "eps,re,im,multiplicity,residual\n");
    }

    #[test]
    fn guard_violation_names_the_scale() {
        let sys = example_system("fig2-stable").unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.01]).unwrap();
        cfg.window = Some([-1.0, 1.0, -1.0, 1.0]);
        match run_spectrum(&cfg) {
            Err(Error::EvaluationRange { k, .. }) => assert_eq!(k, 2),
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_continuous_roots_hug_the_axis() {
        let sys = example_system("fig2-neutral").unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.05]).unwrap();
        cfg.window = Some([-0.01, 0.01, -3.0, 3.0]);
        let res = run_spectrum(&cfg).unwrap();
        assert!(!res.records[0].roots.is_empty());
        assert!(res.records[0].roots.iter().all(|r| r.location.re.abs() < 0.01));
    }

    #[test]
    fn strongly_unstable_root_is_matched() {
        let sys = DelaySystem::scalar(&[c(0.3, 0.0), c(0.1, 0.0), c(0.1, 0.0)], &[1.0, 1.0]).unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.1, 0.05]).unwrap();
        cfg.window = Some([0.2, 0.4, -0.1, 0.1]);
        let report = run_validate(&cfg).unwrap();
        for rec in &report.records {
            assert_eq!(rec.strong_matches.len(), 1);
            assert_eq!(rec.strong_matches[0].count, 1);
            assert_eq!(rec.assignments.len(), 1);
            assert_eq!(rec.assignments[0].scale, 0);
        }
    }

    #[test]
    fn stable_scalar_system_satisfies_delta() {
        let sys = DelaySystem::scalar(&[c(-1.0, 0.3), c(0.5, 0.0)], &[1.0]).unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.05, 0.02]).unwrap();
        cfg.window = Some([-0.1, 0.1, -3.0, 3.0]);
        cfg.delta = Some(0.05);
        let report = run_validate(&cfg).unwrap();
        let last = report.records.last().unwrap();
        assert!(last.eigenvalue_count > 0);
        assert_eq!(last.delta_satisfied, Some(true), "{}", last.max_abs_re_pseudo);
        assert_eq!(report.records[0].delta_satisfied, None);
        assert!(last.assignments.iter().all(|a| a.scale == 1 && !a.unassigned));
    }

    #[test]
    fn spectrum_csv_is_deterministic() {
        let sys = example_system("fig2-unstable").unwrap();
        let mut cfg = RunConfig::for_system(sys, &[0.1]).unwrap();
        cfg.window = Some([-0.05, 0.05, -2.0, 2.0]);
        let render = || {
            let mut buf = vec![];
            run_spectrum(&cfg).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn examples() {
        let r = run_example("fig2-neutral", Some((201, 32))).unwrap();
        assert!(r.sups[1].discrepancy <= 1e-6, "{:?}", r.sups);
        assert!(r.max_sample_discrepancy < 1e-10);
        assert!(run_example("fig4", None).is_err());
        let r = run_example("fig3", Some((101, 16))).unwrap();
        assert!(r.singular_phases.is_some());
        assert_eq!(r.sups[1].general, ExtReal::PosInf);
    }

    #[test]
    fn classify_stable_preset() {
        let cfg = RunConfig::for_system(example_system("fig2-stable").unwrap(), &[]).unwrap();
        let res = run_classify(&cfg).unwrap();
        assert_eq!(res.verdict.status, crate::classify::Status::Stable);
    }
}
