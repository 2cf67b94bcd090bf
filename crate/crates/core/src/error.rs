use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped so callers (notably the CLI) can distinguish
/// input/usage problems from numerical failures.
#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown {kind} id: {id}")]
    UnknownId { kind: &'static str, id: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("gauge error: {0}")]
    Gauge(String),

    #[error("partition error: could not keep {entity} in every training fold")]
    Partition { entity: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by bad inputs or configuration rather than
    /// by the numerics of a well-posed problem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::UnknownId { .. }
                | Error::InsufficientData(_)
                | Error::Protocol(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
