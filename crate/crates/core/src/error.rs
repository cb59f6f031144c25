use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frequency must be positive, got {0}")]
    Frequency(f64),

    #[error("{tensor} in region '{region}' is not strictly passive (minimum sign-adjusted loss eigenvalue {min_eigenvalue:.3e}); {hint}")]
    Passivity {
        tensor: String,
        region: String,
        min_eigenvalue: f64,
        hint: String,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("operator is not positive definite: {0}")]
    Indefinite(String),

    #[error("eigenproblem is defective for direction {direction:?}")]
    Defective { direction: [f64; 3] },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("table error: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
