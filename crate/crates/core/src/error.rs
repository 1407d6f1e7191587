use std::time::Duration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ad {ad_id}: clicks ({clicks}) exceed impressions ({impressions})")]
    ClicksExceedImpressions {
        ad_id: String,
        clicks: u64,
        impressions: u64,
    },

    #[error("duplicate ad_id {0}")]
    DuplicateAd(String),

    #[error("hierarchy violation: {0}")]
    Hierarchy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no embedding for ad {0}")]
    MissingEmbedding(String),

    #[error("provider failed for ad {ad_id}: {source}")]
    AdProvider {
        ad_id: String,
        #[source]
        source: ProviderError,
    },

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("index file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failure of a pCTR or embedding provider. Each kind is distinct so callers
/// can map them onto their own status codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("network error: {0}")]
    Network(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("pctr {0} outside (0, 1)")]
    OutOfRange(f64),
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in response")]
    NonFinite,
    #[error("{0}")]
    Other(String),
}
