//! Single-step update rules and their algebraic inverses.
//!
//! Step index conventions: a forward (sampling) step at `i` writes
//! `x_{i-1}`; an inverse step at `i` writes the state the forward step
//! consumed at the highest index.

use crate::coeffs::special::{check_gamma, check_mix};
use crate::coeffs::{belm2_optimal, belm3_optimal, BelmKCoeffs};
use crate::predictor::NoisePredictor;
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

fn axpy(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
}

fn scaled(x: &[f64], c: f64) -> Vec<f64> {
    x.iter().map(|v| v / c).collect()
}

fn unscaled(x: Vec<f64>, c: f64) -> Vec<f64> {
    x.into_iter().map(|v| v * c).collect()
}

/// Explicit Euler in the scaled variables, written in x-space.
pub fn ddim_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_i: &[f64],
    i: usize,
) -> Vec<f64> {
    let ratio = schedule.alpha(i - 1) / schedule.alpha(i);
    let weight = schedule.sigma(i - 1) - ratio * schedule.sigma(i);
    axpy(ratio, x_i, weight, &predictor.eval(x_i, i))
}

/// Euler in the reverse direction, using the predictor at the lower index.
pub fn ddim_invert_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_im1: &[f64],
    i: usize,
) -> Vec<f64> {
    let ratio = schedule.alpha(i) / schedule.alpha(i - 1);
    let weight = schedule.sigma(i) - ratio * schedule.sigma(i - 1);
    axpy(ratio, x_im1, weight, &predictor.eval(x_im1, i - 1))
}

/// `(a_i, b_i)` shared by the EDICT sub-updates of step `i`.
fn edict_weights(schedule: &NoiseSchedule, i: usize) -> (f64, f64) {
    let a = schedule.alpha(i - 1) / schedule.alpha(i);
    (a, schedule.sigma(i - 1) - a * schedule.sigma(i))
}

/// Coupled step on `(x_i, y_i)`: two cross-evaluated Euler updates followed
/// by two mixing layers with weight `p`.
pub fn edict_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    p: f64,
    x_i: &[f64],
    y_i: &[f64],
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_mix(p)?;
    let (a, b) = edict_weights(schedule, i);
    let x_inter = axpy(a, x_i, b, &predictor.eval(y_i, i));
    let y_inter = axpy(a, y_i, b, &predictor.eval(&x_inter, i));
    let x_next = axpy(p, &x_inter, 1.0 - p, &y_inter);
    let y_next = axpy(p, &y_inter, 1.0 - p, &x_next);
    Ok((x_next, y_next))
}

/// Undoes [`edict_step`] sub-update by sub-update in reverse order.
pub fn edict_invert_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    p: f64,
    x_im1: &[f64],
    y_im1: &[f64],
    i: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_mix(p)?;
    let (a, b) = edict_weights(schedule, i);
    let unmix = |out: &[f64], other: &[f64]| -> Vec<f64> {
        out.iter()
            .zip(other)
            .map(|(o, v)| (o - (1.0 - p) * v) / p)
            .collect()
    };
    let y_inter = unmix(y_im1, x_im1);
    let x_inter = unmix(x_im1, &y_inter);
    let unstep = |inter: &[f64], eps: Vec<f64>| -> Vec<f64> {
        inter
            .iter()
            .zip(eps)
            .map(|(v, e)| (v - b * e) / a)
            .collect()
    };
    let y_i = unstep(&y_inter, predictor.eval(&x_inter, i));
    let x_i = unstep(&x_inter, predictor.eval(&y_i, i));
    Ok((x_i, y_i))
}

/// Symmetric two-step update writing `x_{i-1}` from `(x_{i+1}, x_i)`.
/// With `gamma = 0` the arithmetic is exactly that of [`ddim_step`].
pub fn bdia_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    gamma: f64,
    x_ip1: &[f64],
    x_i: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let s = schedule;
    let down = s.alpha(i - 1) / s.alpha(i);
    let up = s.alpha(i + 1) / s.alpha(i);
    let down_weight = s.sigma(i - 1) - down * s.sigma(i);
    let eps = predictor.eval(x_i, i);
    if gamma == 0.0 {
        return Ok(axpy(down, x_i, down_weight, &eps));
    }
    let up_weight = s.sigma(i + 1) - up * s.sigma(i);
    let out = axpy(
        down - gamma * up,
        x_i,
        down_weight - gamma * up_weight,
        &eps,
    );
    Ok(out.iter().zip(x_ip1).map(|(o, v)| o + gamma * v).collect())
}

/// Writes `x_{i+1}` from `(x_{i-1}, x_i)`; requires `gamma > 0`.
pub fn bdia_invert_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    gamma: f64,
    x_im1: &[f64],
    x_i: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Err(BelmError::NotInvertible(
            "bdia with gamma = 0 discards x_(i+1) and cannot be inverted".into(),
        ));
    }
    let s = schedule;
    let inv = 1.0 / gamma;
    let down = s.alpha(i - 1) / s.alpha(i);
    let up = s.alpha(i + 1) / s.alpha(i);
    let up_weight = s.sigma(i + 1) - up * s.sigma(i);
    let down_weight = s.sigma(i - 1) - down * s.sigma(i);
    let eps = predictor.eval(x_i, i);
    let out = axpy(up - inv * down, x_i, up_weight - inv * down_weight, &eps);
    Ok(out.iter().zip(x_im1).map(|(o, v)| o + inv * v).collect())
}

/// Generic scaled update
/// `xbar_{i-1} = sum_j a_j states[j] + sum_j b_j slopes[j]`, where
/// `states[j] = xbar_{i+j}` and `slopes[j] = h_{i+j} eps_{i+j}`.
pub fn belm_step_xbar(coeffs: &BelmKCoeffs, states: &[&[f64]], slopes: &[&[f64]]) -> Vec<f64> {
    debug_assert_eq!(states.len(), coeffs.k());
    debug_assert_eq!(slopes.len(), coeffs.b.len());
    let d = states[0].len();
    (0..d)
        .map(|m| {
            let mut acc = 0.0;
            for (a, x) in coeffs.a.iter().zip(states).rev() {
                acc += a * x[m];
            }
            for (b, e) in coeffs.b.iter().zip(slopes).rev() {
                acc += b * e[m];
            }
            acc
        })
        .collect()
}

/// Solves the generic scaled update for its highest state `xbar_{i+k-1}`,
/// given `lower = xbar_{i-1}`, `states[j] = xbar_{i+j}` for `j < k - 1`
/// and the same `slopes`.
pub fn belm_reverse_xbar(
    coeffs: &BelmKCoeffs,
    lower: &[f64],
    states: &[&[f64]],
    slopes: &[&[f64]],
) -> Vec<f64> {
    let k = coeffs.k();
    debug_assert_eq!(states.len(), k - 1);
    let top = coeffs.a[k - 1];
    (0..lower.len())
        .map(|m| {
            let mut acc = lower[m];
            for (a, x) in coeffs.a.iter().zip(states).rev() {
                acc -= a * x[m];
            }
            for (b, e) in coeffs.b.iter().zip(slopes).rev() {
                acc -= b * e[m];
            }
            acc / top
        })
        .collect()
}

fn slope(
    predictor: &(impl NoisePredictor + ?Sized),
    schedule: &NoiseSchedule,
    x: &[f64],
    i: usize,
) -> Vec<f64> {
    let h = schedule.sbar(i) - schedule.sbar(i - 1);
    predictor.eval(x, i).into_iter().map(|e| h * e).collect()
}

fn check_two_step(schedule: &NoiseSchedule, i: usize) -> Result<()> {
    if i == 0 || i >= schedule.steps() {
        return Err(BelmError::Config(format!(
            "two-step update needs 1 <= i <= N - 1, got i = {i} with N = {}",
            schedule.steps()
        )));
    }
    Ok(())
}

fn check_three_step(schedule: &NoiseSchedule, i: usize) -> Result<()> {
    if i == 0 || i + 2 > schedule.steps() {
        return Err(BelmError::Config(format!(
            "three-step update needs 1 <= i <= N - 2, got i = {i} with N = {}",
            schedule.steps()
        )));
    }
    Ok(())
}

pub(crate) fn obelm2_coeffs(schedule: &NoiseSchedule, i: usize) -> Result<BelmKCoeffs> {
    let h_i = schedule.sbar(i) - schedule.sbar(i - 1);
    let h_ip1 = schedule.sbar(i + 1) - schedule.sbar(i);
    Ok(belm2_optimal(h_i, h_ip1)?.into_k())
}

pub(crate) fn obelm3_coeffs(schedule: &NoiseSchedule, i: usize) -> Result<BelmKCoeffs> {
    let h = |j: usize| schedule.sbar(j) - schedule.sbar(j - 1);
    belm3_optimal(h(i), h(i + 1), h(i + 2))
}

/// Optimal two-step update writing `x_{i-1}` from `(x_{i+1}, x_i)`.
pub fn obelm2_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_ip1: &[f64],
    x_i: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_two_step(schedule, i)?;
    let c = obelm2_coeffs(schedule, i)?;
    let s = schedule;
    let states = [scaled(x_i, s.alpha(i)), scaled(x_ip1, s.alpha(i + 1))];
    let slopes = [slope(predictor, s, x_i, i)];
    let out = belm_step_xbar(&c, &[&states[0], &states[1]], &[&slopes[0]]);
    Ok(unscaled(out, s.alpha(i - 1)))
}

/// Writes `x_{i+1}` from `(x_{i-1}, x_i)`, inverting [`obelm2_step`].
pub fn obelm2_invert_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_im1: &[f64],
    x_i: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_two_step(schedule, i)?;
    let c = obelm2_coeffs(schedule, i)?;
    let s = schedule;
    let lower = scaled(x_im1, s.alpha(i - 1));
    let state = scaled(x_i, s.alpha(i));
    let slopes = [slope(predictor, s, x_i, i)];
    let out = belm_reverse_xbar(&c, &lower, &[&state], &[&slopes[0]]);
    Ok(unscaled(out, s.alpha(i + 1)))
}

/// Optimal three-step update writing `x_{i-1}` from `(x_{i+2}, x_{i+1}, x_i)`.
pub fn obelm3_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_ip2: &[f64],
    x_ip1: &[f64],
    x_i: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_three_step(schedule, i)?;
    let c = obelm3_coeffs(schedule, i)?;
    let s = schedule;
    let states = [
        scaled(x_i, s.alpha(i)),
        scaled(x_ip1, s.alpha(i + 1)),
        scaled(x_ip2, s.alpha(i + 2)),
    ];
    let slopes = [
        slope(predictor, s, x_i, i),
        slope(predictor, s, x_ip1, i + 1),
    ];
    let out = belm_step_xbar(
        &c,
        &[&states[0], &states[1], &states[2]],
        &[&slopes[0], &slopes[1]],
    );
    Ok(unscaled(out, s.alpha(i - 1)))
}

/// Writes `x_{i+2}` from `(x_{i-1}, x_i, x_{i+1})`, inverting [`obelm3_step`].
pub fn obelm3_invert_step<P: NoisePredictor + ?Sized>(
    predictor: &P,
    schedule: &NoiseSchedule,
    x_im1: &[f64],
    x_i: &[f64],
    x_ip1: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    check_three_step(schedule, i)?;
    let c = obelm3_coeffs(schedule, i)?;
    let s = schedule;
    let lower = scaled(x_im1, s.alpha(i - 1));
    let states = [scaled(x_i, s.alpha(i)), scaled(x_ip1, s.alpha(i + 1))];
    let slopes = [
        slope(predictor, s, x_i, i),
        slope(predictor, s, x_ip1, i + 1),
    ];
    let out = belm_reverse_xbar(
        &c,
        &lower,
        &[&states[0], &states[1]],
        &[&slopes[0], &slopes[1]],
    );
    Ok(unscaled(out, s.alpha(i + 2)))
}
