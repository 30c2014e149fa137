//! Bidirectional explicit linear multistep (BELM) samplers for diffusion
//! probability-flow ODEs.
//!
//! The crate is organised bottom-up:
//!
//! * [`schedule`] owns discrete noise schedules and the scaled-sigma grid.
//! * [`predictor`] defines the noise-predictor interface and analytic toy
//!   problems with known flows.
//! * [`coeffs`] builds multistep coefficients (closed forms, the general
//!   k-step order system, BDIA/EDICT mappings) and the root-matrix
//!   stability check.
//! * [`samplers`] implements DDIM, EDICT, BDIA and O-BELM step rules and the
//!   sampling / inversion drivers.
//! * [`analysis`] measures convergence orders, local truncation errors,
//!   reconstruction errors and perturbation growth.

pub mod analysis;
pub mod coeffs;
mod error;
pub mod format;
pub mod predictor;
pub mod rng;
pub mod samplers;
pub mod schedule;

pub use error::{BelmError, Result};
pub use predictor::{
    AnalyticProblem, ConstantPredictor, GaussianProblem, NoisePredictor, PolynomialProblem,
    SyntheticPredictor,
};

pub use samplers::{invert, sample, InversionSeed, Method, Trajectory};
pub use schedule::{Grid, NoiseSchedule};
