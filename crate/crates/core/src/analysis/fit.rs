//! Log-log least-squares order fits.

use crate::{BelmError, Result};

/// Errors below this are treated as rounding noise and left out of fits.
pub const ROUNDING_FLOOR: f64 = 100.0 * f64::EPSILON;

/// Least-squares slope of `ln(error)` against `ln(h)`.
///
/// Pairs whose error lies below [`ROUNDING_FLOOR`] (or is not a positive
/// finite number) are excluded; fewer than three remaining pairs is an error.
pub fn fit_order(pairs: &[(f64, f64)]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(h, e)| *h > 0.0 && h.is_finite() && e.is_finite() && *e >= ROUNDING_FLOOR)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(BelmError::InsufficientData {
            usable: usable.len(),
        });
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(BelmError::InsufficientData { usable: 1 });
    }
    Ok(sxy / sxx)
}
