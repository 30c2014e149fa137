//! Discrete noise schedules and the scaled-sigma grid.
//!
//! Index 0 is the data end and index `N` the noise end. The scaled sigma
//! `sbar_i = sigma_i / alpha_i` is strictly increasing in `i`, so every step
//! size `h_i = sbar_i - sbar_{i-1}` is positive.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{BelmError, Result};

/// Validated `(alpha_i, sigma_i)` tables, immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTables")]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTables {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl TryFrom<RawTables> for NoiseSchedule {
    type Error = BelmError;

    fn try_from(raw: RawTables) -> Result<Self> {
        NoiseSchedule::from_tables(raw.alphas, raw.sigmas)
    }
}

impl NoiseSchedule {
    /// Validates raw tables. At least two entries (one step) are required.
    pub fn from_tables(alphas: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if alphas.len() != sigmas.len() {
            return Err(BelmError::Schedule(format!(
                "alphas has {} entries but sigmas has {}",
                alphas.len(),
                sigmas.len()
            )));
        }
        if alphas.len() < 2 {
            return Err(BelmError::Schedule(
                "a schedule needs at least two entries".into(),
            ));
        }
        for (i, (&a, &s)) in alphas.iter().zip(&sigmas).enumerate() {
            if !a.is_finite() || !s.is_finite() {
                return Err(BelmError::Schedule(format!(
                    "non-finite entry at index {i}"
                )));
            }
            if a <= 0.0 {
                return Err(BelmError::Schedule(format!(
                    "alpha must be positive, alpha_{i} = {a}"
                )));
            }
            if s < 0.0 || (i > 0 && s == 0.0) {
                return Err(BelmError::Schedule(format!(
                    "sigma_{i} = {s} violates sigma_0 >= 0, sigma_i > 0 for i >= 1"
                )));
            }
        }
        for i in 1..alphas.len() {
            let prev = sigmas[i - 1] / alphas[i - 1];
            let cur = sigmas[i] / alphas[i];
            if cur <= prev {
                return Err(BelmError::Schedule(format!(
                    "scaled sigma is not strictly increasing: sbar_{} = {prev}, sbar_{i} = {cur}",
                    i - 1
                )));
            }
        }
        Ok(Self { alphas, sigmas })
    }

    /// Discrete variance-preserving schedule over a linear beta ramp.
    ///
    /// `beta_j` runs linearly from `beta_start` (j = 1) to `beta_end` (j = N),
    /// `alpha_i^2 = prod_{j <= i} (1 - beta_j)` and `alpha_0 = 1`, `sigma_0 = 0`.
    pub fn vp_linear(n: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if n < 2 {
            return Err(BelmError::Config(format!(
                "vp-linear schedule needs N >= 2, got {n}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(BelmError::Config(format!(
                "beta range must satisfy 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let mut alphas = Vec::with_capacity(n + 1);
        let mut sigmas = Vec::with_capacity(n + 1);
        alphas.push(1.0);
        sigmas.push(0.0);
        // log of the cumulative product keeps 1 - alpha^2 accurate near the data end
        let mut log_abar = 0.0_f64;
        for j in 1..=n {
            let beta = beta_start + (beta_end - beta_start) * (j - 1) as f64 / (n - 1) as f64;
            log_abar += (-beta).ln_1p();
            alphas.push((0.5 * log_abar).exp());
            sigmas.push((-log_abar.exp_m1()).sqrt());
        }
        Self::from_tables(alphas, sigmas)
    }

    /// `vp_linear(train_steps, ..)` subsampled at the `n + 1` evenly spaced
    /// indices `round(j * train_steps / n)`, the usual way a pretrained
    /// discrete schedule is strided for few-step sampling.
    pub fn vp_linear_strided(
        train_steps: usize,
        n: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> Result<Self> {
        if n == 0 || n > train_steps {
            return Err(BelmError::Config(format!(
                "strided schedule needs 1 <= N <= train_steps, got N = {n}, train_steps = {train_steps}"
            )));
        }
        let full = Self::vp_linear(train_steps, beta_start, beta_end)?;
        full.subsample(n)
    }

    /// Keeps the entries at indices `round(j * N / n)`, `j = 0..=n`.
    pub fn subsample(&self, n: usize) -> Result<Self> {
        let total = self.steps();
        if n == 0 || n > total {
            return Err(BelmError::Config(format!(
                "cannot subsample {total} steps down to {n}"
            )));
        }
        let pick = |j: usize| ((j as f64) * total as f64 / n as f64).round() as usize;
        let alphas = (0..=n).map(|j| self.alphas[pick(j)]).collect();
        let sigmas = (0..=n).map(|j| self.sigmas[pick(j)]).collect();
        Self::from_tables(alphas, sigmas)
    }

    /// Unit-alpha schedule whose scaled sigma grows geometrically from
    /// `sbar_min` to `sbar_max`, so `h_{i+1} / h_i` is constant and above one.
    pub fn geometric(n: usize, sbar_min: f64, sbar_max: f64) -> Result<Self> {
        if n == 0 || !(sbar_min > 0.0 && sbar_max > sbar_min && sbar_max.is_finite()) {
            return Err(BelmError::Config(format!(
                "geometric schedule needs N >= 1 and 0 < sbar_min < sbar_max, got N = {n}, ({sbar_min}, {sbar_max})"
            )));
        }
        let ratio = sbar_max / sbar_min;
        let sbar: Vec<f64> = (0..=n)
            .map(|i| sbar_min * ratio.powf(i as f64 / n as f64))
            .collect();
        Self::unit_alpha(&sbar)
    }

    /// `alpha = 1`, `sigma = sbar`.
    pub fn unit_alpha(sbar: &[f64]) -> Result<Self> {
        Self::from_tables(vec![1.0; sbar.len()], sbar.to_vec())
    }

    /// Variance-preserving tables with the given scaled sigmas:
    /// `alpha = 1 / sqrt(1 + sbar^2)`, `sigma = sbar * alpha`.
    pub fn vp_from_sbar(sbar: &[f64]) -> Result<Self> {
        let alphas: Vec<f64> = sbar.iter().map(|s| 1.0 / s.hypot(1.0)).collect();
        let sigmas = sbar.iter().zip(&alphas).map(|(s, a)| s * a).collect();
        Self::from_tables(alphas, sigmas)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| BelmError::Schedule(format!("invalid schedule JSON: {e}")))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            BelmError::Config(format!("cannot read schedule file {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serialization cannot fail")
    }

    /// Number of steps `N` (one less than the table length).
    pub fn steps(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigmas[i]
    }

    pub fn sbar(&self, i: usize) -> f64 {
        self.sigmas[i] / self.alphas[i]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `alpha_i^2 + sigma_i^2 = 1` for every entry, within `tol`.
    pub fn is_variance_preserving(&self, tol: f64) -> bool {
        self.alphas
            .iter()
            .zip(&self.sigmas)
            .all(|(a, s)| (a * a + s * s - 1.0).abs() <= tol)
    }

    pub fn grid(&self) -> Grid {
        grid_of(self)
    }
}

/// Scaled sigmas and the step sizes between them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    sbar: Vec<f64>,
    /// `steps[i - 1] = h_i`
    steps: Vec<f64>,
}

impl Grid {
    pub fn sbar(&self) -> &[f64] {
        &self.sbar
    }

    /// `h_1 ..= h_N` in order.
    pub fn step_sizes(&self) -> &[f64] {
        &self.steps
    }

    /// `h_i` for `1 <= i <= N`. There is no `h_0`.
    pub fn h(&self, i: usize) -> f64 {
        assert!(
            i >= 1 && i <= self.steps.len(),
            "step index {i} out of range"
        );
        self.steps[i - 1]
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    pub fn h_max(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    /// Rebuilds `sbar` from `sbar_0` and the cumulative step sizes.
    pub fn reconstruct_sbar(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sbar.len());
        let mut acc = self.sbar[0];
        out.push(acc);
        for h in &self.steps {
            acc += h;
            out.push(acc);
        }
        out
    }
}

pub fn grid_of(schedule: &NoiseSchedule) -> Grid {
    let sbar: Vec<f64> = (0..=schedule.steps()).map(|i| schedule.sbar(i)).collect();
    let steps = sbar.windows(2).map(|w| w[1] - w[0]).collect();
    Grid { sbar, steps }
}

/// Second differences of the scaled sigma, for the strict-concavity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityReport {
    /// `sbar_{i+1} - 2 sbar_i + sbar_{i-1}` for `i = 1 ..= N - 1`.
    pub second_differences: Vec<f64>,
    /// Every second difference is strictly negative.
    pub satisfied: bool,
}

pub fn check_concavity(schedule: &NoiseSchedule) -> ConcavityReport {
    concavity_of(grid_of(schedule).sbar())
}

pub fn concavity_of(sbar: &[f64]) -> ConcavityReport {
    let second_differences: Vec<f64> = sbar.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let satisfied = !second_differences.is_empty() && second_differences.iter().all(|&d| d < 0.0);
    ConcavityReport {
        second_differences,
        satisfied,
    }
}
