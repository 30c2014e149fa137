//! Global error at the data end against the exact flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{max_abs_diff, optional_fit, order_cell};
use crate::format::{fmt_g17, CsvTable};
use crate::predictor::AnalyticProblem;
use crate::samplers::{sample, Method};
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

/// A schedule constructor parameterised by the step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleFamily {
    /// A fresh `n`-step linear-beta schedule.
    VpLinear { beta_start: f64, beta_end: f64 },
    /// `n` evenly strided steps of a fixed fine linear-beta schedule, so the
    /// endpoints stay put as `n` grows.
    VpStrided {
        train_steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
    /// Unit alpha with geometrically spaced scaled sigmas.
    Geometric { sbar_min: f64, sbar_max: f64 },
}

impl ScheduleFamily {
    pub fn build(&self, n: usize) -> Result<NoiseSchedule> {
        match *self {
            Self::VpLinear {
                beta_start,
                beta_end,
            } => NoiseSchedule::vp_linear(n, beta_start, beta_end),
            Self::VpStrided {
                train_steps,
                beta_start,
                beta_end,
            } => NoiseSchedule::vp_linear_strided(train_steps, n, beta_start, beta_end),
            Self::Geometric { sbar_min, sbar_max } => {
                NoiseSchedule::geometric(n, sbar_min, sbar_max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h_max: f64,
    /// Max-norm error at `x_0`.
    pub global_error: f64,
    /// Max-norm error over every grid point.
    pub max_grid_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub method: Method,
    pub problem: String,
    pub rows: Vec<ConvergenceRow>,
    /// `None` when fewer than three errors clear the rounding floor.
    pub fitted_order: Option<f64>,
}

impl ConvergenceReport {
    pub fn to_table(&self) -> CsvTable {
        let mut table = CsvTable::new([
            "method",
            "problem",
            "N",
            "h_max",
            "global_error",
            "max_grid_error",
            "fitted_order",
        ]);
        for (k, row) in self.rows.iter().enumerate() {
            table.push(vec![
                self.method.to_string(),
                self.problem.clone(),
                row.n.to_string(),
                fmt_g17(row.h_max),
                fmt_g17(row.global_error),
                fmt_g17(row.max_grid_error),
                order_cell(k + 1 == self.rows.len(), self.fitted_order),
            ]);
        }
        table
    }
}

/// Samples `problem` from the fixed start `x_n` on `family.build(n)` for each
/// `n` in `ns`, and fits the order of the data-end error against `h_max`.
pub fn convergence_study<P: AnalyticProblem + Sync>(
    method: Method,
    problem: &P,
    family: &ScheduleFamily,
    ns: &[usize],
    x_n: &[f64],
) -> Result<ConvergenceReport> {
    method.validate()?;
    if ns.iter().any(|&n| n < 4) || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BelmError::Config(format!(
            "step counts must be strictly increasing and at least 4, got {ns:?}"
        )));
    }
    let rows = ns
        .par_iter()
        .map(|&n| convergence_point(method, problem, family, n, x_n))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h_max, r.global_error)).collect();
    Ok(ConvergenceReport {
        method,
        problem: problem.label(),
        fitted_order: optional_fit(&pairs)?,
        rows,
    })
}

fn convergence_point<P: AnalyticProblem>(
    method: Method,
    problem: &P,
    family: &ScheduleFamily,
    n: usize,
    x_n: &[f64],
) -> Result<ConvergenceRow> {
    let schedule = family.build(n)?;
    let local = problem.rescheduled(schedule.clone());
    let traj = sample(method, &local, &schedule, x_n).map_err(|e| match e {
        BelmError::NumericalFailure(msg) => BelmError::NumericalFailure(format!("{msg} (N = {n})")),
        other => other,
    })?;
    let mut max_grid_error: f64 = 0.0;
    let mut global_error = 0.0;
    for (i, x) in traj.states.iter().enumerate() {
        let err = max_abs_diff(x, &local.flow(x_n, n, i));
        max_grid_error = max_grid_error.max(err);
        if i == 0 {
            global_error = err;
        }
    }
    if !global_error.is_finite() || !max_grid_error.is_finite() {
        return Err(BelmError::NumericalFailure(format!(
            "{method} produced a non-finite error at N = {n}"
        )));
    }
    Ok(ConvergenceRow {
        n,
        h_max: schedule.grid().h_max(),
        global_error,
        max_grid_error,
    })
}
