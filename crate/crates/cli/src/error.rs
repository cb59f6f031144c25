use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration is invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] wavemin::Error),

    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

impl CliError {
    /// 2 for invalid input, 3 for non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use wavemin::Error as E;
        match self {
            CliError::Config(_) | CliError::Read { .. } => 2,
            CliError::NotConverged(_) => 3,
            CliError::Write { .. } => 1,
            CliError::Core(e) => match e {
                E::Validation(_)
                | E::Dimension(_)
                | E::Frequency(_)
                | E::Passivity { .. }
                | E::Unsupported(_)
                | E::Table(_)
                | E::Csv(_) => 2,
                E::Singular(_) | E::Indefinite(_) | E::Defective { .. } | E::Io(_) => 1,
            },
        }
    }
}
