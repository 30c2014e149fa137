//! Growth of a starting-value perturbation along a trajectory.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::format::{fmt_g17, CsvTable};
use crate::predictor::NoisePredictor;
use crate::rng::{self, streams};
use crate::samplers::{sample, sample_from_starts, Method, Trajectory};
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub method: Method,
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    /// `max_i max-norm(xbar_i - zbar_i) / delta` over steps and trials.
    pub k_hat: f64,
}

impl PerturbationReport {
    pub fn to_table(&self) -> CsvTable {
        let mut table = CsvTable::new(["method", "N", "delta", "K_hat"]);
        table.push(vec![
            self.method.to_string(),
            self.n.to_string(),
            fmt_g17(self.delta),
            fmt_g17(self.k_hat),
        ]);
        table
    }
}

/// Pairs a seeded trajectory with one whose starting slots are shifted by
/// `delta` in every scaled component (random signs), and reports the largest
/// scaled deviation relative to `delta`.
///
/// Every starting slot of the method is perturbed: the `k` history states
/// for multistep methods and both `x_N` and `y_N` for EDICT.
pub fn perturbation_study<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    method.validate()?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(BelmError::Config(format!(
            "delta must be non-negative, got {delta}"
        )));
    }
    if trials == 0 {
        return Err(BelmError::Config("at least one trial is required".into()));
    }
    let mut report = PerturbationReport {
        method,
        n: schedule.steps(),
        delta,
        trials,
        k_hat: 0.0,
    };
    if delta == 0.0 {
        return Ok(report);
    }
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| amplification(method, predictor, schedule, delta, seed, t))
        .collect::<Result<Vec<f64>>>()?;
    report.k_hat = per_trial.into_iter().fold(0.0, f64::max);
    Ok(report)
}

fn amplification<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    delta: f64,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let n = schedule.steps();
    let dim = predictor.dim();
    let x_n = rng::normal_vec(&mut rng::stream(seed, streams::START_STATES + trial), dim);
    let base = sample(method, predictor, schedule, &x_n)?;
    let starts: Vec<(usize, Vec<f64>)> = match &base.aux {
        Some(aux) => vec![(n, base.states[n].clone()), (n, aux[n].clone())],
        None => {
            let slots = method.history().min(n + 1);
            (0..slots)
                .map(|j| (n - j, base.states[n - j].clone()))
                .collect()
        }
    };
    let mut signs = rng::stream(seed, streams::PERTURBATIONS + trial);
    let shifted: Vec<Vec<f64>> = starts
        .into_iter()
        .map(|(i, x)| {
            let shift = delta * schedule.alpha(i);
            x.into_iter()
                .map(|v| {
                    if signs.random_bool(0.5) {
                        v + shift
                    } else {
                        v - shift
                    }
                })
                .collect()
        })
        .collect();
    let other = sample_from_starts(method, predictor, schedule, shifted)?;
    Ok(max_scaled_gap(&base, &other, schedule) / delta)
}

fn max_scaled_gap(a: &Trajectory, b: &Trajectory, schedule: &NoiseSchedule) -> f64 {
    let gap = |x: &[Vec<f64>], z: &[Vec<f64>]| {
        x.iter().zip(z).enumerate().fold(0.0_f64, |m, (i, (u, v))| {
            m.max(super::max_abs_diff(u, v) / schedule.alpha(i))
        })
    };
    let mut worst = gap(&a.states, &b.states);
    if let (Some(ya), Some(yb)) = (&a.aux, &b.aux) {
        worst = worst.max(gap(ya, yb));
    }
    worst
}
