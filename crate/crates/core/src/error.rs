use std::path::PathBuf;

/// Errors raised anywhere in the prediction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("table has no valid rows")]
    EmptyTable,
    #[error("duplicate record key (source={source_tag}, cell={cell_id}, cycle={cycle})")]
    DuplicateKey {
        source_tag: String,
        cell_id: String,
        cycle: u64,
    },
    #[error("feature `{feature}` has zero variance for source {source_tag}")]
    DegenerateFeature { source_tag: String, feature: String },
    #[error("no normalization statistics recorded for source {0}")]
    MissingStats(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("requested {folds} folds but only {groups} groups are available")]
    TooManyFolds { folds: usize, groups: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input `{0}` is constant")]
    ConstantInput(String),
    #[error("empty input")]
    Empty,
    #[error("target is constant; R² is undefined")]
    ConstantTarget,
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("cell {cell_id} has {cycles} cycles, fewer than the window of {window}")]
    WindowTooLong {
        cell_id: String,
        cycles: usize,
        window: usize,
    },
    #[error("model used before fit")]
    NotFitted,
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{model} failed on fold {fold}: {source}")]
    Fold {
        model: String,
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips fold tagging to reach the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
