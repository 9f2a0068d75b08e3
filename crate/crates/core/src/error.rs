use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency {f} THz outside loss table range [{lo}, {hi}] THz")]
    FrequencyOutOfRange { f: f64, lo: f64, hi: f64 },

    #[error("frequency {f} THz falls in a guard band (no band covers it)")]
    GuardBand { f: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix size mismatch: {0}")]
    ShapeMismatch(String),

    #[error("solver diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("solver did not converge within {iterations} iterations (residual {residual_db:.3e} dB)")]
    NotConverged { iterations: usize, residual_db: f64 },

    #[error("non-positive power encountered: {0}")]
    NonPositivePower(String),

    #[error("NLI table is missing channel {0}")]
    MissingNliChannel(u32),

    #[error("no feasible candidate was evaluated")]
    NoFeasibleCandidate,

    #[error("span count mismatch: expected {expected}, got {got}")]
    SpanCountMismatch { expected: usize, got: usize },

    #[error("empty result set")]
    EmptyResults,

    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
