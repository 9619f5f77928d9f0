use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("Kraus completeness violated: |sum K^dag K - 1|_max = {residual:.3e}")]
    CompletenessViolation { residual: f64 },

    #[error("invalid channel: min Choi eigenvalue {min_eigenvalue:.3e}, trace-preservation residual {tp_residual:.3e}")]
    InvalidChannel { min_eigenvalue: f64, tp_residual: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: String, value: f64 },

    #[error("probabilities must be non-negative and sum to 1 (sum = {sum})")]
    InvalidDistribution { sum: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("invalid projector set: {0}")]
    InvalidProjectors(String),

    #[error("circuit error: {0}")]
    Circuit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("no valid distribution reaches the target (residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Scenario(_) | Error::Json(_) | Error::Io(_) | Error::Circuit(_)
        )
    }
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name: name.to_string(), value })
    }
}
