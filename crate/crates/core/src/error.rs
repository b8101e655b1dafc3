use thiserror::Error;

/// Errors raised across the discretization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {value} lies outside [0, 1]")]
    Domain { value: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid knot vector: {0}")]
    KnotVector(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("singular geometry: |det DF| = {det:e} at ({u}, {v})")]
    SingularGeometry { det: f64, u: f64, v: f64 },

    #[error("inconsistent decomposition: {0}")]
    Construction(String),

    #[error("unsupported primal/dual pairing: {0}")]
    UnsupportedPairing(String),

    #[error("numerically singular saddle-point system ({context})")]
    SingularSystem { context: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag for the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Argument(_) => "argument",
            Error::KnotVector(_) => "knot_vector",
            Error::Geometry(_) => "geometry",
            Error::SingularGeometry { .. } => "singular_geometry",
            Error::Construction(_) => "construction",
            Error::UnsupportedPairing(_) => "unsupported_pairing",
            Error::SingularSystem { .. } => "singular_system",
            Error::Internal(_) => "internal",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
