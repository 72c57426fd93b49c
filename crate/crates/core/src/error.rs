use std::path::PathBuf;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("degenerate epipolar line {0}: no valid cell")]
    DegenerateLine(usize),
    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Usage(_) => "usage",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Parse { .. } => "parse",
            Error::Truncated { .. } => "truncated",
            Error::DegenerateLine(_) => "degenerate_line",
            Error::DegeneratePrior(_) => "degenerate_prior",
            Error::Insufficient(_) => "insufficient",
            Error::TooLarge(_) => "too_large",
            Error::Scene(_) => "scene",
            Error::Line { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
