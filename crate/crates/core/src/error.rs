use thiserror::Error;

/// Errors raised by the inversion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("index {index} outside [-{bound}, {bound}]")]
    IndexOutOfRange { index: i64, bound: i64 },

    #[error("grid of {grid} points per axis cannot resolve band {band} (need at least {required})")]
    GridTooSmall {
        grid: usize,
        band: usize,
        required: usize,
    },

    #[error("coefficients are not Hermitian-symmetric (max defect {defect:.3e})")]
    NonHermitian { defect: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: {what} (condition estimate {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown test signal `{0}`")]
    UnknownSignal(String),

    #[error("empty chain")]
    EmptyChain,

    #[error("malformed configuration: {0}")]
    Config(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) | Error::UnknownSignal(_) | Error::InvalidBasis(_) => {
                ErrorKind::Config
            }
            Error::Io(_) | Error::Archive(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Numerical => "numerical",
        }
    }
}
