use thiserror::Error;

use crate::linalg::PauliString;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max |A - A^dagger| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("no estimate supplied for Pauli string {0}")]
    MissingEstimate(PauliString),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("measurement basis {0} is not one of ZZ, ZX, XZ, XX")]
    UnsupportedBasis(PauliString),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("confusion matrix for setting {setting} is singular (|det| = {det:.3e})")]
    SingularGamma { setting: PauliString, det: f64 },

    #[error("interatomic distance {0} A is not in the coefficient table")]
    UnknownDistance(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failure while
    /// running an otherwise valid computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::UnsupportedBasis(_)
                | Error::OutOfRange { .. }
                | Error::UnknownDistance(_)
                | Error::NotHermitian { .. }
                | Error::MissingEstimate(_)
        )
    }
}
