use thiserror::Error;

/// Errors produced by the laboratory's numerical operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument violates an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A factorization or solve failed. `condition` carries the estimated
    /// condition number of the offending matrix when one is available.
    #[error("numerical error: {message}{}", condition.map(|c| format!(" (condition number ~ {c:.3e})")).unwrap_or_default())]
    Numerical {
        message: String,
        condition: Option<f64>,
    },

    /// A structured object (coupling, band pattern) could not be built.
    #[error("construction error: {0}")]
    Construction(String),
}

impl LabError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        LabError::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, condition: Option<f64>) -> Self {
        LabError::Numerical {
            message: msg.into(),
            condition,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(LabError::param(format!(
            "{what}: dimension {got} does not match truncation {expected}"
        )));
    }
    Ok(())
}
