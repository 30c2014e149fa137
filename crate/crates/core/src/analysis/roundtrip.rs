//! Reconstruction error of sampling followed by inversion, and the reverse.

use rayon::prelude::*;
use serde::Serialize;

use super::{max_abs, max_abs_diff};
use crate::format::{fmt_g17, CsvTable};
use crate::predictor::NoisePredictor;
use crate::rng::{self, streams};
use crate::samplers::{invert, sample, sample_from_starts, InversionSeed, Method, Trajectory};
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

pub const MIN_TRIALS: usize = 10;

/// Worst case over the trials of one method on one schedule. Failed or
/// non-finite trials count as infinite error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripRow {
    pub method: Method,
    pub n: usize,
    pub trials: usize,
    /// `max |x_N' - x_N| / max |x_N|` after sampling then inverting.
    pub max_rel_error: f64,
    /// Mean squared error of the same reconstruction, worst trial.
    pub mse: f64,
    /// The same relative error for inverting data then sampling back.
    pub reverse_max_rel_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub rows: Vec<RoundtripRow>,
    pub notes: Vec<String>,
}

impl RoundtripReport {
    pub fn extend(&mut self, other: RoundtripReport) {
        self.rows.extend(other.rows);
        self.notes.extend(other.notes);
    }

    /// Largest forward error over every row of `method`.
    pub fn max_rel_error(&self, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.max_rel_error)
            .reduce(f64::max)
    }

    pub fn to_table(&self) -> CsvTable {
        let mut table = CsvTable::new([
            "method",
            "N",
            "trials",
            "max_rel_error",
            "mse",
            "reverse_max_rel_error",
        ]);
        for row in &self.rows {
            table.push(vec![
                row.method.to_string(),
                row.n.to_string(),
                row.trials.to_string(),
                fmt_g17(row.max_rel_error),
                fmt_g17(row.mse),
                fmt_g17(row.reverse_max_rel_error),
            ]);
        }
        table
    }
}

/// Runs `trials` seeded roundtrips per method on one schedule.
///
/// Forward: draw `x_N`, sample, invert from the full sampled data-end
/// history, compare with `x_N`. Reverse: draw `x_0`, invert with
/// bootstrapped history, sample back from the inverted noise-end states,
/// compare with `x_0`. Methods that cannot be inverted are skipped with a
/// note.
pub fn roundtrip_study<P: NoisePredictor + ?Sized>(
    methods: &[Method],
    predictor: &P,
    schedule: &NoiseSchedule,
    trials: usize,
    seed: u64,
) -> Result<RoundtripReport> {
    if trials < MIN_TRIALS {
        return Err(BelmError::Config(format!(
            "roundtrip needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let mut report = RoundtripReport::default();
    for &method in methods {
        method.validate()?;
        if matches!(method, Method::Bdia { gamma } if gamma == 0.0) {
            report.notes.push(format!(
                "{method} skipped: gamma = 0 discards history and has no inverse"
            ));
            continue;
        }
        let outcomes: Vec<TrialOutcome> = (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(method, predictor, schedule, seed, t))
            .collect::<Result<Vec<_>>>()?;
        let mut row = RoundtripRow {
            method,
            n: schedule.steps(),
            trials,
            max_rel_error: 0.0,
            mse: 0.0,
            reverse_max_rel_error: 0.0,
        };
        let mut failures = 0;
        for o in outcomes {
            failures += o.failures;
            row.max_rel_error = row.max_rel_error.max(o.forward_rel);
            row.mse = row.mse.max(o.forward_mse);
            row.reverse_max_rel_error = row.reverse_max_rel_error.max(o.reverse_rel);
        }
        if failures > 0 {
            report.notes.push(format!(
                "{method} at N = {}: {failures} numerical failure(s) recorded as infinite error",
                schedule.steps()
            ));
        }
        report.rows.push(row);
    }
    Ok(report)
}

struct TrialOutcome {
    forward_rel: f64,
    forward_mse: f64,
    reverse_rel: f64,
    failures: usize,
}

fn run_trial<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    seed: u64,
    trial: u64,
) -> Result<TrialOutcome> {
    let dim = predictor.dim();
    let n = schedule.steps();
    let mut failures = 0;

    let x_n = rng::normal_vec(&mut rng::stream(seed, streams::START_STATES + trial), dim);
    let forward = sample(method, predictor, schedule, &x_n).and_then(|traj| {
        invert(
            method,
            predictor,
            schedule,
            &InversionSeed::from_trajectory(&traj),
        )
    });
    let (forward_rel, forward_mse) = match absorb(forward, &mut failures)? {
        Some(inv) => {
            let back = &inv.states[n];
            let sq: f64 = back.iter().zip(&x_n).map(|(a, b)| (a - b).powi(2)).sum();
            let mse = sq / dim as f64;
            (
                relative(back, &x_n),
                if mse.is_finite() { mse } else { f64::INFINITY },
            )
        }
        None => (f64::INFINITY, f64::INFINITY),
    };

    let x_0 = rng::normal_vec(&mut rng::stream(seed, streams::DATA_STATES + trial), dim);
    let reverse = invert(
        method,
        predictor,
        schedule,
        &InversionSeed::new(x_0.clone()),
    )
    .and_then(|inv| sample_from_starts(method, predictor, schedule, noise_end_starts(&inv)));
    let reverse_rel = match absorb(reverse, &mut failures)? {
        Some(traj) => relative(&traj.states[0], &x_0),
        None => f64::INFINITY,
    };

    Ok(TrialOutcome {
        forward_rel,
        forward_mse,
        reverse_rel,
        failures,
    })
}

fn relative(x: &[f64], reference: &[f64]) -> f64 {
    let err = max_abs_diff(x, reference) / max_abs(reference);
    if err.is_finite() {
        err
    } else {
        f64::INFINITY
    }
}

/// Turns numerical failures into a missing result; other errors propagate.
fn absorb(result: Result<Trajectory>, failures: &mut usize) -> Result<Option<Trajectory>> {
    match result {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.is_numerical() => {
            *failures += 1;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Starting values for resampling an inverted trajectory.
fn noise_end_starts(traj: &Trajectory) -> Vec<Vec<f64>> {
    let n = traj.states.len() - 1;
    match &traj.aux {
        Some(aux) => vec![traj.states[n].clone(), aux[n].clone()],
        None => {
            let slots = traj.method.history().min(n + 1);
            (0..slots).map(|j| traj.states[n - j].clone()).collect()
        }
    }
}
