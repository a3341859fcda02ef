use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("division by zero in `{field}`")]
    DivisionDomain { field: String },

    #[error("omega0 * tau = {value} is below the monochromatic threshold {threshold}")]
    BelowMonochromaticThreshold { value: f64, threshold: f64 },

    #[error("order {order} exceeds the configured bound {bound}")]
    OrderOverflow { order: usize, bound: usize },

    #[error("singular evaluation at omega = {omega}: {detail}")]
    SingularEvaluation { omega: f64, detail: String },

    #[error("quadrature did not converge: estimate {estimate:e} with error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("grid too coarse: estimated relative quadrature error {estimated:e} exceeds {limit:e}")]
    Resolution { estimated: f64, limit: f64 },

    #[error("line {line}: {reason}")]
    Config { line: usize, reason: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularEvaluation { .. } | Error::Quadrature { .. } | Error::Resolution { .. }
        )
    }
}
