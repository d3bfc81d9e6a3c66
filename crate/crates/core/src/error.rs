use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or dimensions disagree.
    #[error("structural error: {0}")]
    Shape(String),

    /// A value became NaN/Inf or an operation is numerically undefined.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("local training diverged at step {step}")]
    Divergence { step: usize },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Error {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by bad user input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io { .. } | Error::Csv(_))
    }

    /// Round index carried by the error, if any.
    pub fn round(&self) -> Option<usize> {
        match self {
            Error::Round { round, .. } => Some(*round),
            _ => None,
        }
    }
}
