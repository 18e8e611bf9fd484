use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariance error: {0}")]
    Covariance(String),

    #[error("ill-conditioned Fisher information (condition {condition:.3e}); near-degenerate parameters: {}", params.join(", "))]
    IllConditioned { condition: f64, params: Vec<String> },

    #[error("negative CRB diagonal at {0} beyond clipping tolerance")]
    NegativeCrb(String),

    #[error("gain magnitude transform undefined for path {path} band {band}: |g| = 0")]
    UndefinedTransform { path: usize, band: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
