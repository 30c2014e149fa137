//! Measurement harness: convergence orders, local truncation errors,
//! reconstruction errors and perturbation growth.
//!
//! Study grid points run in parallel; results are assembled in input order,
//! so every report is a deterministic function of its arguments.

mod convergence;
mod fit;
mod lte;
mod perturbation;
mod roundtrip;

pub use convergence::{convergence_study, ConvergenceReport, ConvergenceRow, ScheduleFamily};
pub use fit::{fit_order, ROUNDING_FLOOR};
pub use lte::{lte_study, lte_study_on, LocalGrid, LteReport, LteRow};
pub use perturbation::{perturbation_study, PerturbationReport};
pub use roundtrip::{roundtrip_study, RoundtripReport, RoundtripRow, MIN_TRIALS};

use crate::format::fmt_g17;
use crate::BelmError;

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Fitted slope, or `None` when too few points clear the rounding floor.
fn optional_fit(pairs: &[(f64, f64)]) -> crate::Result<Option<f64>> {
    match fit_order(pairs) {
        Ok(slope) => Ok(Some(slope)),
        Err(BelmError::InsufficientData { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The fitted order cell: filled on the last row only.
fn order_cell(is_last: bool, order: Option<f64>) -> String {
    match (is_last, order) {
        (true, Some(v)) => fmt_g17(v),
        _ => String::new(),
    }
}
