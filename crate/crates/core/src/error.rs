use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the failure modes the pipeline
/// distinguishes at the CLI boundary (config, hash, coverage, divergence).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("manifest generation failed: {0}")]
    ManifestGeneration(String),

    #[error("exploration coverage failure: doorway-crossing fraction {got:.3} below required {required:.3}")]
    Coverage { got: f64, required: f64 },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),

    #[error("training diverged: {0}")]
    TrainingDivergence(String),

    #[error("singular system in {0}")]
    SingularSystem(&'static str),

    #[error("rank-deficient probe matrix (rank {0}, need full row rank)")]
    RankDeficient(usize),

    #[error("oracle cost requires simulator states but none were provided")]
    MissingOracleState,

    #[error("oracle cost `{0}` refused: evaluation is in deployment mode")]
    OracleRefused(String),

    #[error("candidate pool mismatch: {0}")]
    PoolMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("missing run artifact: {0}")]
    MissingRun(String),

    #[error("artifact hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
