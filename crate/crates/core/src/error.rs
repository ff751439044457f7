use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the localization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("source at {point:?} lies on or outside the usable disk")]
    SourceOutsideDisk { point: [f64; 2] },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("ill-conditioned system: condition number {condition:.3e} exceeds {limit:.1e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("degenerate resolution at node {index}: diagonal entry {value:.3e} below floor")]
    DegenerateResolution { index: usize, value: f64 },

    #[error("normalized projection undefined for a zero vector")]
    UndefinedProjection,

    #[error("signal is identically zero; noise level relative to it is undefined")]
    DegenerateSignal,

    #[error("noise level is zero; SNR is infinite")]
    InfiniteSnr,

    #[error("every column is parallel to column {node}; localization problem is trivial")]
    TrivialProblem { node: usize },

    #[error("filter diverged: innovation covariance condition number {condition:.3e}")]
    FilterDivergence { condition: f64 },

    #[error("filter step {step}: {source}")]
    FilterStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate clustering input: {0}")]
    DegenerateCluster(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("refusing to overwrite existing output {0} (pass --overwrite)")]
    OutputExists(PathBuf),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
