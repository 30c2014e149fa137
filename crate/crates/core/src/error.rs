use thiserror::Error;

pub type Result<T> = std::result::Result<T, BelmError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BelmError {
    /// Invalid parameters or mismatched inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A schedule table violates one of its invariants.
    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("singular step: {0}")]
    SingularStep(String),

    #[error("singular system: pivot {pivot:e} below tolerance at column {column}")]
    SingularSystem { pivot: f64, column: usize },

    #[error("inaccurate solve: residual {residual:e} exceeds {tolerance:e}")]
    InaccurateSolve { residual: f64, tolerance: f64 },

    #[error("not invertible: {0}")]
    NotInvertible(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient data: {usable} usable points, at least 3 required")]
    InsufficientData { usable: usize },
}

impl BelmError {
    /// True for failures that come from the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BelmError::SingularStep(_)
                | BelmError::SingularSystem { .. }
                | BelmError::InaccurateSolve { .. }
                | BelmError::NumericalFailure(_)
                | BelmError::InsufficientData { .. }
        )
    }
}
