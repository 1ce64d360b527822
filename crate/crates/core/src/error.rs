use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max deviation {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration accuracy failure: {quantity} drifted by {drift:.3e} (limit {limit:.1e}); raise substeps")]
    IntegrationAccuracy {
        quantity: &'static str,
        drift: f64,
        limit: f64,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("incomplete episode in rollout buffer (episode {0})")]
    IncompleteEpisode(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format version mismatch: file has {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
