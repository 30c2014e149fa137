//! One-step errors from exact history on a small local grid.

use rayon::prelude::*;
use serde::Serialize;

use super::{max_abs_diff, optional_fit, order_cell};
use crate::coeffs::{edict_phase_coeffs, EdictInterleaved, EdictPhase};
use crate::format::{fmt_g17, CsvTable};
use crate::predictor::AnalyticProblem;
use crate::samplers::Method;
use crate::samplers::{bdia_step, ddim_step, obelm2_step, obelm3_step};
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

/// Local grid for a one-step measurement: `sbar_0 = anchor` and step
/// `j >= 1` has length `h * ratio^(j-1)`, with variance-preserving alphas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalGrid {
    pub anchor: f64,
    pub ratio: f64,
}

impl Default for LocalGrid {
    fn default() -> Self {
        Self {
            anchor: 1.0,
            ratio: 1.25,
        }
    }
}

impl LocalGrid {
    pub fn schedule(&self, h: f64, steps: usize) -> Result<NoiseSchedule> {
        let mut sbar = vec![self.anchor];
        let mut len = h;
        for _ in 0..steps {
            sbar.push(sbar[sbar.len() - 1] + len);
            len *= self.ratio;
        }
        NoiseSchedule::vp_from_sbar(&sbar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LteRow {
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LteReport {
    pub method: Method,
    pub problem: String,
    pub rows: Vec<LteRow>,
    pub fitted_order: Option<f64>,
}

impl LteReport {
    pub fn to_table(&self) -> CsvTable {
        let mut table = CsvTable::new(["method", "problem", "h", "error", "fitted_order"]);
        for (k, row) in self.rows.iter().enumerate() {
            table.push(vec![
                self.method.to_string(),
                self.problem.clone(),
                fmt_g17(row.h),
                fmt_g17(row.error),
                order_cell(k + 1 == self.rows.len(), self.fitted_order),
            ]);
        }
        table
    }
}

/// [`lte_study_on`] with the default local grid.
pub fn lte_study<P: AnalyticProblem + Sync>(
    method: Method,
    problem: &P,
    hs: &[f64],
) -> Result<LteReport> {
    lte_study_on(method, problem, hs, &LocalGrid::default())
}

/// Max-norm x-space error of one step taken from exact history states,
/// for each base step length in `hs`.
///
/// EDICT is measured phase by phase on its interleaved grid, and the
/// reported error is the largest of its four sub-updates.
pub fn lte_study_on<P: AnalyticProblem + Sync>(
    method: Method,
    problem: &P,
    hs: &[f64],
    grid: &LocalGrid,
) -> Result<LteReport> {
    method.validate()?;
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(BelmError::Config(format!(
            "step sizes must be positive, got {hs:?}"
        )));
    }
    if !(grid.ratio.is_finite()
        && grid.ratio > 0.0
        && grid.anchor.is_finite()
        && grid.anchor >= 0.0)
    {
        return Err(BelmError::Config(format!("invalid local grid {grid:?}")));
    }
    let rows = hs
        .par_iter()
        .map(|&h| {
            let error = one_step_error(method, problem, h, grid)?;
            if !error.is_finite() {
                return Err(BelmError::NumericalFailure(format!(
                    "{method} produced a non-finite one-step error at h = {h}"
                )));
            }
            Ok(LteRow { h, error })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.error)).collect();
    Ok(LteReport {
        method,
        problem: problem.label(),
        fitted_order: optional_fit(&pairs)?,
        rows,
    })
}

fn one_step_error<P: AnalyticProblem>(
    method: Method,
    problem: &P,
    h: f64,
    grid: &LocalGrid,
) -> Result<f64> {
    let steps = match method {
        Method::Ddim | Method::Edict { .. } => 1,
        Method::Obelm2 | Method::Bdia { .. } => 2,
        Method::Obelm3 => 3,
    };
    let schedule = grid.schedule(h, steps)?;
    let local = problem.rescheduled(schedule.clone());
    let reference = vec![1.0; problem.dim()];
    let exact_xbar = |sbar: f64| local.flow_xbar(&reference, grid.anchor, sbar);
    let x: Vec<Vec<f64>> = (0..=steps)
        .map(|j| {
            exact_xbar(schedule.sbar(j))
                .into_iter()
                .map(|v| v * schedule.alpha(j))
                .collect()
        })
        .collect();
    let predicted = match method {
        Method::Ddim => ddim_step(&local, &schedule, &x[1], 1),
        Method::Obelm2 => obelm2_step(&local, &schedule, &x[2], &x[1], 1)?,
        Method::Bdia { gamma } => bdia_step(&local, &schedule, gamma, &x[2], &x[1], 1)?,
        Method::Obelm3 => obelm3_step(&local, &schedule, &x[3], &x[2], &x[1], 1)?,
        Method::Edict { p } => return edict_phase_error(p, &local, &schedule, &exact_xbar),
    };
    Ok(max_abs_diff(&predicted, &x[0]))
}

fn edict_phase_error<P: AnalyticProblem>(
    p: f64,
    local: &P,
    schedule: &NoiseSchedule,
    exact_xbar: &dyn Fn(f64) -> Vec<f64>,
) -> Result<f64> {
    let inter = EdictInterleaved::new(schedule);
    let mut worst: f64 = 0.0;
    for j in -1..=inter.top() - 2 {
        let c = edict_phase_coeffs(p, schedule, j)?;
        let near = exact_xbar(inter.sbar(j + 1));
        let far = exact_xbar(inter.sbar(j + 2));
        let near_x: Vec<f64> = near.iter().map(|v| v * inter.alpha(j + 1)).collect();
        let eps = local.eval(&near_x, EdictPhase::step_of(j));
        let slope = inter.h(j + 1);
        let predicted: Vec<f64> = (0..near.len())
            .map(|m| c.a2 * far[m] + c.a1 * near[m] + c.b1 * slope * eps[m])
            .collect();
        let err = max_abs_diff(&predicted, &exact_xbar(inter.sbar(j))) * inter.alpha(j);
        worst = worst.max(err);
    }
    Ok(worst)
}
