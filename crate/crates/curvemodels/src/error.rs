use thiserror::Error;

/// Crate-wide error type. The CLI maps each variant family to a stable exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad JSON, wrong dimensions inside a file, invalid parameters.
    #[error("schema: {0}")]
    Schema(String),
    /// Structurally valid inputs that cannot be combined (curve/weight/dimension mismatch).
    #[error("incompatible: {0}")]
    Incompatible(String),
    /// A documented budget (enumeration size, truncation order) was exceeded.
    #[error("budget exceeded: {0}")]
    Budget(String),
    /// A numerical tolerance was violated (fit residual, truncation loss, rank instability).
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable process exit code for scripting: 2 schema, 3 incompatibility,
    /// 4 budget, 5 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 2,
            Error::Incompatible(_) => 3,
            Error::Budget(_) => 4,
            Error::Numerical(_) => 5,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
