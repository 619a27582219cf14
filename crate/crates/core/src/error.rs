use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports.
///
/// Variants are grouped by the exit class the CLI maps them to: input
/// validation, certificate failure, and numerical divergence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e}): {what}")]
    NotSymmetric { what: String, asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:.3e}): {what}")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e}): {what}")]
    NotHurwitz { what: String, abscissa: f64 },

    #[error("pair (A, B) is not stabilizable: uncontrollable mode at {re:.6} {im:+.6}i")]
    NotStabilizable { re: f64, im: f64 },

    #[error("pair (Q^1/2, A) is not detectable: unobservable mode at {re:.6} {im:+.6}i")]
    NotDetectable { re: f64, im: f64 },

    #[error(
        "{what} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("certificate failed: {what} ({} offending states)", states.len())]
    Certificate { what: String, states: Vec<Vec<f64>> },

    #[error("state outside the model domain at t = {t}: {what}")]
    Domain { t: f64, what: String },

    #[error("integration diverged at t = {t}: last finite state {state:?}")]
    Divergence { t: f64, state: Vec<f64> },

    #[error("horizon {horizon} exhausted before reaching the terminal set (V = {level:.3e}, state {state:?})")]
    Horizon {
        horizon: f64,
        level: f64,
        state: Vec<f64>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse class of an error, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Certificate,
    Divergence,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::Invalid(_)
            | Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Validation,
            Error::Divergence { .. } | Error::Domain { .. } | Error::Horizon { .. } => {
                ErrorClass::Divergence
            }
            Error::NotHurwitz { .. }
            | Error::NotStabilizable { .. }
            | Error::NotDetectable { .. }
            | Error::NoConvergence { .. }
            | Error::Singular(_)
            | Error::Certificate { .. } => ErrorClass::Certificate,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
