//! Root matrices and the weighted-norm zero-stability check.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{belm2_optimal, belm3_optimal, BelmKCoeffs};
use crate::schedule::Grid;
use crate::{BelmError, Result};

/// Companion matrix with the state weights on the first row and ones on the
/// subdiagonal.
pub fn root_matrix(coeffs: &BelmKCoeffs) -> DMatrix<f64> {
    let k = coeffs.k();
    let mut m = DMatrix::zeros(k, k);
    for (j, a) in coeffs.a.iter().enumerate() {
        m[(0, j)] = *a;
    }
    for r in 1..k {
        m[(r, r - 1)] = 1.0;
    }
    m
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Outcome of the sufficient stability condition for the two-step optimal
/// method on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `max_i h_i^2 / h_{i+1}^2` over `i = 1 ..= N - 1`.
    pub eta: f64,
    /// `|H^-1 R_i H|_1` per interior step; empty when `eta >= 1`.
    pub norms: Vec<f64>,
    pub passed: bool,
    /// Set when the bound cannot be evaluated.
    pub reason: Option<String>,
    /// Spectral radii of the three-step root matrices. Informational only.
    pub three_step_spectral_radii: Vec<f64>,
}

/// Slack on the unit norm bound.
pub const NORM_SLACK: f64 = 1e-12;

pub fn stability_check(grid: &Grid) -> Result<StabilityReport> {
    let n = grid.steps();
    if n < 2 {
        return Err(BelmError::Config(format!(
            "stability check needs at least two steps, got {n}"
        )));
    }
    let eta = (1..n)
        .map(|i| (grid.h(i) / grid.h(i + 1)).powi(2))
        .fold(0.0, f64::max);
    let three_step_spectral_radii = (1..n.saturating_sub(1))
        .filter_map(|i| belm3_optimal(grid.h(i), grid.h(i + 1), grid.h(i + 2)).ok())
        .map(|c| spectral_radius(&root_matrix(&c)))
        .collect();
    if eta >= 1.0 {
        return Ok(StabilityReport {
            eta,
            norms: Vec::new(),
            passed: false,
            reason: Some("eta ≥ 1".into()),
            three_step_spectral_radii,
        });
    }
    let c = 2.0 / (1.0 - eta);
    let h = DMatrix::from_row_slice(2, 2, &[1.0, c, 0.0, c]);
    let h_inv = h
        .clone()
        .try_inverse()
        .expect("upper triangular with non-zero diagonal");
    let norms: Vec<f64> = (1..n)
        .map(|i| {
            let coeffs = belm2_optimal(grid.h(i), grid.h(i + 1))?.into_k();
            let m = &h_inv * root_matrix(&coeffs) * &h;
            Ok(one_norm(&m))
        })
        .collect::<Result<_>>()?;
    let passed = norms.iter().all(|v| *v <= 1.0 + NORM_SLACK);
    Ok(StabilityReport {
        eta,
        norms,
        passed,
        reason: None,
        three_step_spectral_radii,
    })
}

/// Maximum absolute column sum.
fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
