//! Resolved run configuration: command-line flags overlaid by an optional
//! JSON config file.

use std::path::{Path, PathBuf};

use belm_core::analysis::{LocalGrid, ScheduleFamily};
use belm_core::{
    AnalyticProblem, ConstantPredictor, GaussianProblem, Method, NoisePredictor, NoiseSchedule,
    PolynomialProblem, SyntheticPredictor,
};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Ddim,
    Edict,
    Bdia,
    Obelm2,
    Obelm3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Linear betas over exactly N steps.
    VpLinear,
    /// N strided steps of a linear-beta schedule with `train_steps` steps.
    VpStrided,
    /// Unit alpha, geometric scaled sigmas in [sbar_min, sbar_max].
    Geometric,
    /// JSON tables from `schedule_file`, subsampled when N differs.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Gaussian,
    Polynomial,
    Synthetic,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Flags shared by every subcommand. Flags a subcommand does not use are
/// still recorded in the resolved config.
#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// JSON object whose keys override the corresponding flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampler(s); studies accept a comma-separated list.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "obelm2")]
    pub method: Vec<MethodName>,
    /// BDIA mixing weight.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// EDICT mixing weight.
    #[arg(long, default_value_t = 0.93)]
    pub p: f64,
    #[arg(long, value_enum, default_value = "vp-linear")]
    pub schedule: ScheduleKind,
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub beta_end: f64,
    #[arg(long, default_value_t = 1000)]
    pub train_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub sbar_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub sbar_max: f64,
    #[arg(long)]
    pub schedule_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub problem: ProblemKind,
    /// Gaussian data standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Polynomial coefficients, lowest degree first.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,1,0.5",
        allow_negative_numbers = true
    )]
    pub poly_coeffs: Vec<f64>,
    /// Step count N.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Step counts for sweeps (convergence, roundtrip).
    #[arg(long, value_delimiter = ',')]
    pub ns: Vec<usize>,
    /// Step sizes (coeffs: h_i..h_(i+k-1); lte: base step lengths).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub hs: Vec<f64>,
    /// Number of steps of the coefficient system (defaults to the length of --hs).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbation size for the stability subcommand.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Scaled sigma where LTE local grids start.
    #[arg(long, default_value_t = 1.0)]
    pub anchor: f64,
    /// Growth factor between consecutive LTE local steps.
    #[arg(long, default_value_t = 1.25)]
    pub ratio: f64,
    /// Trajectory CSV whose data end seeds an inversion.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

/// Every setting of a run after flags and config file are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Vec<MethodName>,
    pub gamma: f64,
    pub p: f64,
    pub schedule: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_steps: usize,
    pub sbar_min: f64,
    pub sbar_max: f64,
    pub schedule_file: Option<PathBuf>,
    pub problem: ProblemKind,
    pub s: f64,
    pub poly_coeffs: Vec<f64>,
    pub steps: usize,
    pub ns: Vec<usize>,
    pub hs: Vec<f64>,
    pub k: Option<usize>,
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub delta: Option<f64>,
    pub anchor: f64,
    pub ratio: f64,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
}

impl RunConfig {
    /// Builds the config from flags, then applies the keys of `--config`.
    pub fn resolve(flags: Flags, command: &str) -> Result<Self, CliError> {
        let format = flags.format;
        let base = RunConfig {
            method: flags.method,
            gamma: flags.gamma,
            p: flags.p,
            schedule: flags.schedule,
            beta_start: flags.beta_start,
            beta_end: flags.beta_end,
            train_steps: flags.train_steps,
            sbar_min: flags.sbar_min,
            sbar_max: flags.sbar_max,
            schedule_file: flags.schedule_file,
            problem: flags.problem,
            s: flags.s,
            poly_coeffs: flags.poly_coeffs,
            steps: flags.steps,
            ns: flags.ns,
            hs: flags.hs,
            k: flags.k,
            dim: flags.dim,
            trials: flags.trials,
            seed: flags.seed,
            delta: flags.delta,
            anchor: flags.anchor,
            ratio: flags.ratio,
            input: flags.input,
            out: flags
                .out
                .unwrap_or_else(|| PathBuf::from(format!("belm-{command}.{}", format.extension()))),
            format,
        };
        let resolved = match flags.config {
            Some(path) => base.overlay(&path)?,
            None => base,
        };
        resolved.check_files()?;
        Ok(resolved)
    }

    fn overlay(self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let patch: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let serde_json::Value::Object(patch) = patch else {
            return Err(CliError::Config(format!(
                "config {} must be a JSON object",
                path.display()
            )));
        };
        let mut merged = serde_json::to_value(&self).expect("config serialization cannot fail");
        let fields = merged
            .as_object_mut()
            .expect("config serializes to an object");
        for (key, value) in patch {
            fields.insert(key, value);
        }
        serde_json::from_value(merged)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    fn check_files(&self) -> Result<(), CliError> {
        let referenced = [&self.schedule_file, &self.input];
        for path in referenced.into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "file not found: {}",
                    path.display()
                )));
            }
        }
        if self.schedule == ScheduleKind::File && self.schedule_file.is_none() {
            return Err(CliError::Config(
                "--schedule file needs --schedule-file".into(),
            ));
        }
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<Method>, CliError> {
        if self.method.is_empty() {
            return Err(CliError::Config("at least one method is required".into()));
        }
        self.method
            .iter()
            .map(|name| {
                let m = match name {
                    MethodName::Ddim => Method::Ddim,
                    MethodName::Edict => Method::Edict { p: self.p },
                    MethodName::Bdia => Method::Bdia { gamma: self.gamma },
                    MethodName::Obelm2 => Method::Obelm2,
                    MethodName::Obelm3 => Method::Obelm3,
                };
                m.validate()?;
                Ok(m)
            })
            .collect()
    }

    pub fn single_method(&self) -> Result<Method, CliError> {
        match self.methods()?.as_slice() {
            [m] => Ok(*m),
            _ => Err(CliError::Config(
                "this command takes exactly one method".into(),
            )),
        }
    }

    pub fn schedule_for(&self, n: usize) -> Result<NoiseSchedule, CliError> {
        let schedule = match self.schedule {
            ScheduleKind::File => {
                let path = self
                    .schedule_file
                    .as_ref()
                    .expect("checked at resolve time");
                let full = NoiseSchedule::load_json(path)?;
                if full.steps() == n {
                    full
                } else {
                    full.subsample(n)?
                }
            }
            _ => self.family()?.build(n)?,
        };
        Ok(schedule)
    }

    pub fn family(&self) -> Result<ScheduleFamily, CliError> {
        Ok(match self.schedule {
            ScheduleKind::VpLinear => ScheduleFamily::VpLinear {
                beta_start: self.beta_start,
                beta_end: self.beta_end,
            },
            ScheduleKind::VpStrided => ScheduleFamily::VpStrided {
                train_steps: self.train_steps,
                beta_start: self.beta_start,
                beta_end: self.beta_end,
            },
            ScheduleKind::Geometric => ScheduleFamily::Geometric {
                sbar_min: self.sbar_min,
                sbar_max: self.sbar_max,
            },
            ScheduleKind::File => {
                return Err(CliError::Config(
                    "a schedule file has a fixed step count; use a parametric schedule".into(),
                ))
            }
        })
    }

    pub fn predictor(&self, schedule: &NoiseSchedule) -> Result<Box<dyn NoisePredictor>, CliError> {
        Ok(match self.problem {
            ProblemKind::Synthetic => {
                Box::new(SyntheticPredictor::new(self.seed, self.dim, schedule))
            }
            ProblemKind::Zero => {
                if self.dim == 0 {
                    return Err(CliError::Config("dimension must be positive".into()));
                }
                Box::new(ConstantPredictor::zero(self.dim))
            }
            _ => match self.analytic(schedule)? {
                Analytic::Gaussian(g) => Box::new(g),
                Analytic::Polynomial(p) => Box::new(p),
            },
        })
    }

    pub fn analytic(&self, schedule: &NoiseSchedule) -> Result<Analytic, CliError> {
        match self.problem {
            ProblemKind::Gaussian => Ok(Analytic::Gaussian(GaussianProblem::new(
                self.s,
                self.dim,
                schedule.clone(),
            )?)),
            ProblemKind::Polynomial => Ok(Analytic::Polynomial(PolynomialProblem::new(
                self.poly_coeffs.clone(),
                self.dim,
                schedule.clone(),
            )?)),
            other => Err(CliError::Config(format!(
                "{other:?} has no exact solution; use the gaussian or polynomial problem"
            ))),
        }
    }

    pub fn local_grid(&self) -> LocalGrid {
        LocalGrid {
            anchor: self.anchor,
            ratio: self.ratio,
        }
    }
}

/// Problems with an exact flow, as needed by the order studies.
pub enum Analytic {
    Gaussian(GaussianProblem),
    Polynomial(PolynomialProblem),
}

impl Analytic {
    pub fn label(&self) -> String {
        match self {
            Analytic::Gaussian(g) => g.label(),
            Analytic::Polynomial(p) => p.label(),
        }
    }
}
