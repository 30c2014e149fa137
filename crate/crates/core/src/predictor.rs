//! Noise predictors `eps(x, i)` and analytic toy problems with known flows.
//!
//! In scaled variables the probability-flow ODE reads `d xbar / d sbar = eps`,
//! with `xbar = x / alpha`. The toy problems below solve it in closed form.

use rand::Rng;

use crate::rng::{self, streams};
use crate::schedule::NoiseSchedule;

/// Deterministic map `(state, step index) -> predicted noise`.
///
/// Implementations are stateless so they can be shared across threads.
pub trait NoisePredictor: Send + Sync {
    fn dim(&self) -> usize;

    /// `i` ranges over `0..=N` of the schedule the predictor was built for.
    fn eval(&self, x: &[f64], i: usize) -> Vec<f64>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64], i: usize) -> Vec<f64> {
        (**self).eval(x, i)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64], i: usize) -> Vec<f64> {
        (**self).eval(x, i)
    }
}

/// A predictor whose scaled-variable flow is known exactly.
pub trait AnalyticProblem: NoisePredictor {
    fn schedule(&self) -> &NoiseSchedule;

    /// Short identifier used in report tables.
    fn label(&self) -> String;

    /// Exact solution of the scaled ODE carried from `sbar_from` to `sbar_to`.
    fn flow_xbar(&self, xbar: &[f64], sbar_from: f64, sbar_to: f64) -> Vec<f64>;

    /// The same problem evaluated on another schedule.
    fn rescheduled(&self, schedule: NoiseSchedule) -> Self
    where
        Self: Sized;

    /// Exact flow in x-space between two grid indices.
    fn flow(&self, x_from: &[f64], i_from: usize, i_to: usize) -> Vec<f64> {
        let s = self.schedule();
        let xbar: Vec<f64> = x_from.iter().map(|v| v / s.alpha(i_from)).collect();
        self.flow_xbar(&xbar, s.sbar(i_from), s.sbar(i_to))
            .into_iter()
            .map(|v| v * s.alpha(i_to))
            .collect()
    }
}

/// Data distribution `N(0, s^2 I)`; its marginal score is linear in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProblem {
    pub s: f64,
    pub dim: usize,
    pub schedule: NoiseSchedule,
}

impl GaussianProblem {
    pub fn new(s: f64, dim: usize, schedule: NoiseSchedule) -> crate::Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(crate::BelmError::Config(format!(
                "gaussian data std must be positive, got {s}"
            )));
        }
        if dim == 0 {
            return Err(crate::BelmError::Config(
                "dimension must be positive".into(),
            ));
        }
        Ok(Self { s, dim, schedule })
    }

    /// Marginal standard deviation `sqrt(alpha_i^2 s^2 + sigma_i^2)`.
    pub fn marginal_std(&self, i: usize) -> f64 {
        let a = self.schedule.alpha(i);
        (a * a * self.s * self.s + self.schedule.sigma(i).powi(2)).sqrt()
    }
}

pub fn gaussian_eps(x: &[f64], i: usize, problem: &GaussianProblem) -> Vec<f64> {
    let a = problem.schedule.alpha(i);
    let sig = problem.schedule.sigma(i);
    let denom = a * a * problem.s * problem.s + sig * sig;
    x.iter().map(|v| sig * v / denom).collect()
}

pub fn gaussian_exact_flow(
    x_from: &[f64],
    i_from: usize,
    i_to: usize,
    problem: &GaussianProblem,
) -> Vec<f64> {
    let ratio = problem.marginal_std(i_to) / problem.marginal_std(i_from);
    x_from.iter().map(|v| v * ratio).collect()
}

impl NoisePredictor for GaussianProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], i: usize) -> Vec<f64> {
        gaussian_eps(x, i, self)
    }
}

impl AnalyticProblem for GaussianProblem {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn label(&self) -> String {
        format!("gaussian(s={})", crate::format::fmt_g17(self.s))
    }

    fn flow_xbar(&self, xbar: &[f64], sbar_from: f64, sbar_to: f64) -> Vec<f64> {
        let ratio = self.s.hypot(sbar_to) / self.s.hypot(sbar_from);
        xbar.iter().map(|v| v * ratio).collect()
    }

    fn rescheduled(&self, schedule: NoiseSchedule) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }

    fn flow(&self, x_from: &[f64], i_from: usize, i_to: usize) -> Vec<f64> {
        gaussian_exact_flow(x_from, i_from, i_to, self)
    }
}

/// Manufactured solution `xbar(sbar) = xbar(sbar_0) + P(sbar) - P(sbar_0)`
/// in every component; the predictor returns `P'(sbar_i)` and ignores `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProblem {
    /// `c_0 ..= c_m`, lowest degree first.
    pub coeffs: Vec<f64>,
    pub dim: usize,
    pub schedule: NoiseSchedule,
}

impl PolynomialProblem {
    pub fn new(coeffs: Vec<f64>, dim: usize, schedule: NoiseSchedule) -> crate::Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(crate::BelmError::Config(
                "polynomial needs at least one finite coefficient".into(),
            ));
        }
        if dim == 0 {
            return Err(crate::BelmError::Config(
                "dimension must be positive".into(),
            ));
        }
        Ok(Self {
            coeffs,
            dim,
            schedule,
        })
    }

    pub fn value(&self, sbar: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * sbar + c)
    }

    pub fn derivative(&self, sbar: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * sbar + k as f64 * c)
    }
}

pub fn polynomial_eps(x: &[f64], i: usize, problem: &PolynomialProblem) -> Vec<f64> {
    vec![problem.derivative(problem.schedule.sbar(i)); x.len()]
}

impl NoisePredictor for PolynomialProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], i: usize) -> Vec<f64> {
        polynomial_eps(x, i, self)
    }
}

impl AnalyticProblem for PolynomialProblem {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn label(&self) -> String {
        let coeffs: Vec<String> = self
            .coeffs
            .iter()
            .map(|c| crate::format::fmt_g17(*c))
            .collect();
        format!("polynomial({})", coeffs.join(";"))
    }

    fn flow_xbar(&self, xbar: &[f64], sbar_from: f64, sbar_to: f64) -> Vec<f64> {
        let shift = self.value(sbar_to) - self.value(sbar_from);
        xbar.iter().map(|v| v + shift).collect()
    }

    fn rescheduled(&self, schedule: NoiseSchedule) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }
}

/// Smooth nonlinear field with seed-derived mixing:
/// `eps_k = sin((W x)_k + phase_k + freq_k * sbar_i) + tanh(x_k) / 2`.
///
/// Entries of `W` are bounded by `1/d`, so the Euclidean Lipschitz constant
/// in `x` is at most 1.5.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPredictor {
    seed: u64,
    dim: usize,
    weights: Vec<f64>,
    phases: Vec<f64>,
    freqs: Vec<f64>,
    sbar: Vec<f64>,
}

impl SyntheticPredictor {
    pub fn new(seed: u64, dim: usize, schedule: &NoiseSchedule) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut r = rng::stream(seed, streams::SYNTHETIC_WEIGHTS);
        let bound = 1.0 / dim as f64;
        let weights = (0..dim * dim)
            .map(|_| r.random_range(-bound..=bound))
            .collect();
        let phases = rng::uniform_vec(&mut r, dim, 0.0, std::f64::consts::TAU);
        let freqs = rng::uniform_vec(&mut r, dim, 0.5, 1.5);
        Self {
            seed,
            dim,
            weights,
            phases,
            freqs,
            sbar: schedule.grid().sbar().to_vec(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn synthetic_eps(x: &[f64], i: usize, predictor: &SyntheticPredictor) -> Vec<f64> {
    let d = predictor.dim;
    let sbar = predictor.sbar[i];
    (0..d)
        .map(|k| {
            let row = &predictor.weights[k * d..(k + 1) * d];
            let mix: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            (mix + predictor.phases[k] + predictor.freqs[k] * sbar).sin() + 0.5 * x[k].tanh()
        })
        .collect()
}

impl NoisePredictor for SyntheticPredictor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], i: usize) -> Vec<f64> {
        synthetic_eps(x, i, self)
    }
}

/// Returns the same vector for every state and index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPredictor {
    pub value: Vec<f64>,
}

impl ConstantPredictor {
    pub fn uniform(value: f64, dim: usize) -> Self {
        Self {
            value: vec![value; dim],
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::uniform(0.0, dim)
    }
}

impl NoisePredictor for ConstantPredictor {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval(&self, _x: &[f64], _i: usize) -> Vec<f64> {
        self.value.clone()
    }
}

/// Largest finite-difference ratio `|eps(x) - eps(y)|_2 / |x - y|_2` over
/// `pairs` random pairs with `|x|_inf, |y|_inf <= radius`, at step `i`.
pub fn lipschitz_estimate<P: NoisePredictor + ?Sized>(
    predictor: &P,
    i: usize,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let d = predictor.dim();
    let mut r = rng::stream(seed, streams::PROBES);
    let norm = |v: &[f64], w: &[f64]| {
        v.iter()
            .zip(w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let x = rng::uniform_vec(&mut r, d, -radius, radius);
        let y = rng::uniform_vec(&mut r, d, -radius, radius);
        let dx = norm(&x, &y);
        if dx > 0.0 {
            worst = worst.max(norm(&predictor.eval(&x, i), &predictor.eval(&y, i)) / dx);
        }
    }
    worst
}
