use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierspec::harness::{self, Format, RunConfig};
use hierspec::{Epsilon, Error, Result};

#[derive(Parser)]
#[command(name = "hierspec", version, about = "Spectra and stability of DDEs with hierarchical large delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate eigenvalues in a window for each eps.
    Spectrum(Common),
    /// Sample the spectral manifolds and projected families.
    Manifolds(Common),
    /// Classify stability from the asymptotic spectra.
    Classify(Common),
    /// Assign computed eigenvalues to the asymptotic spectra.
    Validate(Common),
    /// Run a scalar preset (fig2-stable, fig2-neutral, fig2-unstable, fig3).
    Example {
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated eps values, strictly decreasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eps: Option<Vec<f64>>,
    /// Search window as re_min,re_max,im_min,im_max.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    grid_omega: Option<usize>,
    #[arg(long)]
    grid_phase: Option<usize>,
    /// Root location tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config is required for this subcommand".into()))?;
        let cfg = RunConfig::load(path)?;
        self.apply(cfg)
    }

    fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(eps) = &self.eps {
            cfg.eps = eps
                .iter()
                .map(|&e| Epsilon::new(e).map_err(|err| Error::Config(err.to_string())))
                .collect::<Result<_>>()?;
        }
        if let Some(w) = &self.window {
            let w: [f64; 4] = w
                .as_slice()
                .try_into()
                .map_err(|_| Error::Config(format!("--window needs 4 values, got {}", w.len())))?;
            cfg.window = Some(w);
        }
        if let Some(dir) = &self.out {
            cfg.output.dir = Some(dir.clone());
        }
        if let Some(f) = &self.format {
            cfg.output.format = f.parse()?;
        }
        if self.grid_omega.is_some() {
            cfg.grid.omega = self.grid_omega;
        }
        if self.grid_phase.is_some() {
            cfg.grid.phase = self.grid_phase;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(c) => {
            let cfg = c.load()?;
            let res = harness::run_spectrum(&cfg)?;
            for rec in &res.records {
                let total: usize = rec.roots.iter().map(|r| r.multiplicity).sum();
                println!("eps={}: {} eigenvalues", rec.eps, total);
            }
            report(&[res.write(&out_dir(&cfg), cfg.output.format)?]);
        }
        Command::Manifolds(c) => {
            let cfg = c.load()?;
            let res = harness::run_manifolds(&cfg)?;
            println!("{} samples", res.samples.len());
            report(&[res.write(&out_dir(&cfg), cfg.output.format)?]);
        }
        Command::Classify(c) => {
            let cfg = c.load()?;
            let res = harness::run_classify(&cfg)?;
            println!("{}", serde_json::to_string(&res.verdict.status)?);
            for note in &res.verdict.notes {
                println!("note: {note}");
            }
            report(&res.write(&out_dir(&cfg))?);
        }
        Command::Validate(c) => {
            let cfg = c.load()?;
            let res = harness::run_validate(&cfg)?;
            for rec in &res.records {
                let unassigned = rec.assignments.iter().filter(|a| a.unassigned).count();
                println!(
                    "eps={}: {} eigenvalues, {} unassigned, max distance per scale {:?}",
                    rec.eps, rec.eigenvalue_count, unassigned, rec.max_distance
                );
            }
            for conv in &res.convergence {
                println!("scale {}: nonincreasing={}", conv.scale, conv.nonincreasing);
            }
            report(&res.write(&out_dir(&cfg), cfg.output.format)?);
        }
        Command::Example { name, common } => {
            let grid = match (common.grid_omega, common.grid_phase) {
                (None, None) => None,
                (o, p) => Some((o.unwrap_or(401), p.unwrap_or(64))),
            };
            let res = harness::run_example(&name, grid)?;
            let format: Format = match &common.format {
                Some(f) => f.parse()?,
                None => Format::Csv,
            };
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            println!(
                "closed form: {}  general: {}  max sup discrepancy: {:e}",
                serde_json::to_string(&res.closed_form_verdict.status)?,
                serde_json::to_string(&res.general_verdict.status)?,
                res.max_sup_discrepancy
            );
            let mut paths = res.write(&dir, format)?;
            if common.eps.is_some() {
                let base = RunConfig::for_system(harness::example_system(&name)?, &[])?;
                let cfg = common.apply(base)?;
                let spectrum = harness::run_spectrum(&cfg)?;
                paths.push(spectrum.write(&dir, format)?);
            }
            report(&paths);
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) | Error::Dimension(_) | Error::Invalid(_) => 2,
        Error::NonDegeneracy(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
