//! Dense solves for the small order-condition systems.

use nalgebra::{DMatrix, DVector};

use crate::{BelmError, Result};

/// Pivots smaller than this in magnitude mark the system as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-14;
/// Accepted residual `|Ax - b|_inf` relative to `|b|_inf`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Largest supported system, matching eleven-step methods.
pub const MAX_SYSTEM_SIZE: usize = 21;

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = matrix.nrows();
    if n != matrix.ncols() || n != rhs.len() {
        return Err(BelmError::Config(format!(
            "expected a square system, got {}x{} with rhs of length {}",
            matrix.nrows(),
            matrix.ncols(),
            rhs.len()
        )));
    }
    if n == 0 || n > MAX_SYSTEM_SIZE {
        return Err(BelmError::Config(format!(
            "system size {n} outside 1..={MAX_SYSTEM_SIZE}"
        )));
    }
    let lu = matrix.clone().lu();
    let u = lu.u();
    for column in 0..n {
        let pivot = u[(column, column)];
        if pivot.is_nan() || pivot.abs() < PIVOT_TOLERANCE {
            return Err(BelmError::SingularSystem { pivot, column });
        }
    }
    let x = lu.solve(rhs).ok_or(BelmError::SingularSystem {
        pivot: 0.0,
        column: 0,
    })?;
    let residual = residual_inf(matrix, &x, rhs);
    let tolerance = RESIDUAL_TOLERANCE * rhs.amax();
    if residual.is_nan() || residual > tolerance {
        return Err(BelmError::InaccurateSolve {
            residual,
            tolerance,
        });
    }
    Ok(x)
}

pub fn residual_inf(matrix: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    (matrix * x - rhs).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let x = solve_dense(&DMatrix::identity(3, 3), &e1).unwrap();
        assert_eq!(x, e1);
    }

    #[test]
    fn zero_row_is_singular() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
        let err = solve_dense(&m, &DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, BelmError::SingularSystem { .. }));
    }

    #[test]
    fn needs_pivoting() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = solve_dense(&m, &DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn rejects_non_square_and_oversized() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(solve_dense(&m, &DVector::zeros(2)).is_err());
        let big = DMatrix::<f64>::identity(22, 22);
        assert!(matches!(
            solve_dense(&big, &DVector::zeros(22)),
            Err(BelmError::Config(_))
        ));
    }
}
