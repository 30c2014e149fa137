//! Multistep weights for bidirectional explicit steps.
//!
//! A `k`-step method in scaled variables advances
//!
//! ```text
//! xbar_{i-1} = sum_{j=1..k} a_j xbar_{i+j-1} + sum_{j=1..k-1} b_j h_{i+j-1} eps_{i+j-1}
//! ```
//!
//! Neither endpoint state enters through the predictor, so the relation can
//! be solved for `xbar_{i-1}` or for `xbar_{i+k-1}` without iteration.

mod linalg;
pub mod special;
pub mod stability;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{BelmError, Result};

pub use linalg::{residual_inf, solve_dense, PIVOT_TOLERANCE, RESIDUAL_TOLERANCE};
pub use special::{bdia_as_belm, edict_phase_coeffs, EdictInterleaved, EdictPhase};
pub use stability::{root_matrix, spectral_radius, stability_check, StabilityReport};

/// Two-step weights on `xbar_i`, `xbar_{i+1}` and `h_i eps_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Belm2Coeffs {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
}

impl Belm2Coeffs {
    pub const DDIM: Self = Self {
        a1: 1.0,
        a2: 0.0,
        b1: -1.0,
    };

    /// `(c1, c2, c3)`: the constant, linear and quadratic Taylor defects of a
    /// step over `(h_i, h_{i+1})`. All three vanish for the optimal weights.
    pub fn lte_conditions(&self, h_i: f64, h_ip1: f64) -> [f64; 3] {
        let Self { a1, a2, b1 } = *self;
        let span = h_i + h_ip1;
        [
            1.0 - a1 - a2,
            -a1 * h_i - a2 * span - b1 * h_i,
            -a1 * h_i * h_i / 2.0 - a2 * span * span / 2.0 - b1 * h_i * h_i,
        ]
    }

    pub fn into_k(self) -> BelmKCoeffs {
        BelmKCoeffs {
            a: vec![self.a1, self.a2],
            b: vec![self.b1],
        }
    }
}

/// `k`-step weights: `a_1..a_k` on states, `b_1..b_{k-1}` on scaled slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BelmKCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BelmKCoeffs {
    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// Flattened unknown vector `[a_1..a_k, b_1..b_{k-1}]`.
    pub fn as_vector(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    fn from_vector(k: usize, v: &[f64]) -> Self {
        Self {
            a: v[..k].to_vec(),
            b: v[k..].to_vec(),
        }
    }
}

/// Two-step weights that cancel the Taylor defect through second order.
pub fn belm2_optimal(h_i: f64, h_ip1: f64) -> Result<Belm2Coeffs> {
    if h_ip1 == 0.0 || !h_ip1.is_finite() || !h_i.is_finite() {
        return Err(BelmError::SingularStep(format!(
            "two-step weights need a finite non-zero h_(i+1), got h_i = {h_i}, h_(i+1) = {h_ip1}"
        )));
    }
    let r = h_i / h_ip1;
    let a2 = r * r;
    Ok(Belm2Coeffs {
        a1: 1.0 - a2,
        a2,
        b1: -(1.0 + r),
    })
}

/// Closed-form three-step weights for steps `(h_i, h_{i+1}, h_{i+2})`.
pub fn belm3_optimal(h0: f64, h1: f64, h2: f64) -> Result<BelmKCoeffs> {
    if [h0, h1, h2].iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(BelmError::SingularStep(format!(
            "three-step weights need positive steps, got ({h0}, {h1}, {h2})"
        )));
    }
    let s01 = h0 + h1;
    let s12 = h1 + h2;
    let s012 = s01 + h2;
    let (h0s, h1s, h2s) = (h0 * h0, h1 * h1, h2 * h2);
    let a1 = -(s01
        * s01
        * (3.0 * h0s * h1 + 2.0 * h0s * h2 + 2.0 * h0 * h1s + 4.0 * h0 * h1 * h2 + 2.0 * h0 * h2s
            - h1s * h1
            - 2.0 * h1s * h2
            - h1 * h2s))
        / (h1s * h1 * s12 * s12);
    let a2 = (h0s
        * (-h0s * h1 + 2.0 * h0s * h2 - 2.0 * h0 * h1s + 4.0 * h0 * h1 * h2 + 2.0 * h0 * h2s
            - h1s * h1
            + 2.0 * h1s * h2
            + 3.0 * h1 * h2s))
        / (h1s * h1 * h2s);
    let a3 = h0s * s01 * s01 / (h2s * s12 * s12);
    let b1 = -(s01 * s01 * s012) / (h1s * s12);
    let b2 = -(h0s * s01 * s012) / (h1s * h1 * h2);
    Ok(BelmKCoeffs {
        a: vec![a1, a2, a3],
        b: vec![b1, b2],
    })
}

/// Order-condition system for the `k`-step method over `hs = (h_i, .., h_{i+k-1})`.
///
/// Unknowns are ordered `[a_1..a_k, b_1..b_{k-1}]`. Row 0 is consistency,
/// row `l` cancels the order-`l` Taylor term about `sbar_{i-1}`.
pub fn belmk_system(hs: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = hs.len();
    if k < 2 {
        return Err(BelmError::Config(format!(
            "k-step system needs k >= 2, got {k}"
        )));
    }
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(BelmError::SingularStep(format!(
            "k-step system needs positive steps, got {hs:?}"
        )));
    }
    let n = 2 * k - 1;
    // reach[j] = h_i + .. + h_{i+j}, the distance from sbar_{i-1} to sbar_{i+j}
    let reach: Vec<f64> = hs
        .iter()
        .scan(0.0, |acc, h| {
            *acc += h;
            Some(*acc)
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..k {
        m[(0, j)] = 1.0;
    }
    let mut factorial = 1.0;
    for l in 1..n {
        let prev_factorial = factorial;
        factorial *= l as f64;
        for j in 0..k {
            m[(l, j)] = reach[j].powi(l as i32) / factorial;
        }
        for j in 0..k - 1 {
            m[(l, k + j)] = hs[j] * reach[j].powi(l as i32 - 1) / prev_factorial;
        }
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    Ok((m, rhs))
}

/// Solves the `k`-step system. The weights depend only on step ratios, so the
/// system is assembled on steps normalised to unit total length.
pub fn belmk_optimal(hs: &[f64]) -> Result<BelmKCoeffs> {
    let total: f64 = hs.iter().sum();
    let scaled: Vec<f64> = hs.iter().map(|h| h / total).collect();
    let (m, rhs) = belmk_system(&scaled)?;
    let x = solve_dense(&m, &rhs)?;
    Ok(BelmKCoeffs::from_vector(hs.len(), x.as_slice()))
}

/// `|A c - e_1|_inf` of the order-condition system on the normalised steps.
pub fn system_residual(hs: &[f64], coeffs: &BelmKCoeffs) -> Result<f64> {
    let total: f64 = hs.iter().sum();
    let scaled: Vec<f64> = hs.iter().map(|h| h / total).collect();
    let (m, rhs) = belmk_system(&scaled)?;
    Ok(residual_inf(
        &m,
        &DVector::from_vec(coeffs.as_vector()),
        &rhs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_steps_two() {
        let c = belm2_optimal(0.3, 0.3).unwrap();
        assert_eq!((c.a1, c.a2, c.b1), (0.0, 1.0, -2.0));
    }

    #[test]
    fn unequal_steps_two_matches_numeric_solve() {
        let c = belm2_optimal(1.0, 2.0).unwrap();
        assert_eq!((c.a1, c.a2, c.b1), (0.75, 0.25, -1.5));
        let (m, rhs) = belmk_system(&[1.0, 2.0]).unwrap();
        let x = solve_dense(&m, &rhs).unwrap();
        for (got, want) in x.iter().zip([0.75, 0.25, -1.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_step_is_singular() {
        assert!(matches!(
            belm2_optimal(1.0, 0.0),
            Err(BelmError::SingularStep(_))
        ));
        assert!(belm3_optimal(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn equal_steps_three() {
        let c = belm3_optimal(0.7, 0.7, 0.7).unwrap();
        let want = [-9.0, 9.0, 1.0, -6.0, -6.0];
        for (got, w) in c.as_vector().iter().zip(want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
        let numeric = belmk_optimal(&[1.0, 1.0, 1.0]).unwrap();
        for (got, w) in numeric.as_vector().iter().zip(want) {
            assert!((got - w).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_steps_four() {
        let c = belmk_optimal(&[1.0; 4]).unwrap();
        let want = [-28.0, 0.0, 28.0, 1.0, -12.0, -36.0, -12.0];
        for (got, w) in c.as_vector().iter().zip(want) {
            assert!((got - w).abs() < 1e-9, "{got} vs {w}");
        }
    }

    #[test]
    fn k2_system_layout() {
        let (m, rhs) = belmk_system(&[1.0, 1.0]).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.5, 2.0, 1.0]);
        assert_eq!(m, want);
        assert_eq!(rhs.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn k3_system_layout() {
        let (h0, h1, h2) = (0.5, 1.0, 2.0);
        let (m, _) = belmk_system(&[h0, h1, h2]).unwrap();
        let (d1, d2, d3) = (h0, h0 + h1, h0 + h1 + h2);
        let want = DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0,
                1.0,
                1.0,
                0.0,
                0.0,
                d1,
                d2,
                d3,
                h0,
                h1,
                d1 * d1 / 2.0,
                d2 * d2 / 2.0,
                d3 * d3 / 2.0,
                h0 * d1,
                h1 * d2,
                d1.powi(3) / 6.0,
                d2.powi(3) / 6.0,
                d3.powi(3) / 6.0,
                h0 * d1 * d1 / 2.0,
                h1 * d2 * d2 / 2.0,
                d1.powi(4) / 24.0,
                d2.powi(4) / 24.0,
                d3.powi(4) / 24.0,
                h0 * d1.powi(3) / 6.0,
                h1 * d2.powi(3) / 6.0,
            ],
        );
        assert!((m - want).amax() < 1e-15);
    }

    #[test]
    fn k_below_two_is_config_error() {
        assert!(matches!(belmk_system(&[1.0]), Err(BelmError::Config(_))));
    }

    #[test]
    fn closed_forms_match_numeric_solve_on_random_grids() {
        use rand::Rng;
        let mut r = crate::rng::stream(2024, 0);
        for _ in 0..100 {
            let hs: Vec<f64> = (0..3).map(|_| r.random_range(0.01..2.0)).collect();
            let closed = belm3_optimal(hs[0], hs[1], hs[2]).unwrap();
            let numeric = belmk_optimal(&hs).unwrap();
            for (a, b) in closed.as_vector().iter().zip(numeric.as_vector()) {
                assert!(
                    (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                    "{hs:?}: {a} vs {b}"
                );
            }
            // rounding alone leaves eps * |c| in the residual, and |c| reaches 1e6 here
            let scale = closed
                .as_vector()
                .iter()
                .fold(1.0_f64, |m, v| m.max(v.abs()));
            let res = system_residual(&hs, &closed).unwrap();
            assert!(res <= 1e-10 * scale, "{hs:?}: residual {res:e}");
        }
    }

    #[test]
    fn extreme_step_ratios_surface_inaccurate_solves() {
        // weights grow like (h_i / h_{i+1})^4; the absolute residual bound
        // cannot hold once they exceed about 1e6
        let err = belmk_optimal(&[0.97, 0.01, 0.01]).unwrap_err();
        assert!(matches!(err, BelmError::InaccurateSolve { .. }));
    }

    proptest! {
        #[test]
        fn two_step_zeroes_lte_conditions(h_i in 1e-3..10.0_f64, h_ip1 in 1e-3..10.0_f64) {
            let c = belm2_optimal(h_i, h_ip1).unwrap();
            let scale = h_i.max(h_ip1).powi(2).max(1.0) * (1.0 + c.a2.abs() + c.b1.abs());
            for defect in c.lte_conditions(h_i, h_ip1) {
                prop_assert!(defect.abs() <= 1e-12 * scale);
            }
            prop_assert!((c.a1 + c.a2 - 1.0).abs() <= 1e-12);
            prop_assert!(c.a2 != 0.0);
        }

        #[test]
        fn closed_forms_match_numeric_solve(
            h0 in 0.1..2.0_f64, h1 in 0.1..2.0_f64, h2 in 0.1..2.0_f64,
        ) {
            let two = belm2_optimal(h0, h1).unwrap().into_k();
            let two_numeric = belmk_optimal(&[h0, h1]).unwrap();
            for (a, b) in two.as_vector().iter().zip(two_numeric.as_vector()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            let three = belm3_optimal(h0, h1, h2).unwrap();
            let numeric = belmk_optimal(&[h0, h1, h2]).unwrap();
            for (a, b) in three.as_vector().iter().zip(numeric.as_vector()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            prop_assert!((three.a.iter().sum::<f64>() - 1.0).abs() <= 1e-10 * three.a.iter().map(|v| v.abs()).sum::<f64>().max(1.0));
            prop_assert!(system_residual(&[h0, h1, h2], &three).unwrap() <= 1e-10);
        }
    }
}
