use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty log-sum")]
    EmptyLogSum,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("vocabulary mismatch between acoustic model and language model")]
    VocabularyMismatch,

    #[error("infeasible model specification: {0}")]
    InfeasibleModel(String),

    #[error("no ended hypothesis found")]
    NoEndedHypothesis,

    #[error("length must be at least 1")]
    ZeroLength,

    #[error("ending probability over an empty beam")]
    EmptyBeam,

    #[error("enumeration of {required} sequences exceeds the cap of {cap}")]
    EnumerationTooLarge { required: u128, cap: u64 },

    #[error("oracle identity violated: {0}")]
    OracleViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("results and references disagree: {0}")]
    IdMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
