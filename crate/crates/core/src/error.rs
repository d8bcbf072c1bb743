use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value violates the invariants of the type or operation that owns it.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("POVM elements do not sum to the identity (residual Frobenius norm {residual:.3e})")]
    IncompletePovm { residual: f64 },

    #[error("{test} needs at least {min} bits, got {got}")]
    TooFewBits {
        test: &'static str,
        min: usize,
        got: usize,
    },

    #[error("block too small for requested epsilon: {n_samples} samples give {available:.1} bits of min-entropy, penalty is {penalty:.1} bits")]
    BlockTooSmall {
        n_samples: usize,
        available: f64,
        penalty: f64,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed at runtime.
    #[error("stage `{stage}` failed: {reason}")]
    Stage { stage: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input rather than by a failing computation or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. }
                | Error::IncompletePovm { .. }
                | Error::TooFewBits { .. }
                | Error::BlockTooSmall { .. }
                | Error::Config(_)
        )
    }
}
