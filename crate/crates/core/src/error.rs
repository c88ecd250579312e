use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("parameter `{0}` has an empty or zero-sized shape")]
    EmptyShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid bucket count {0}; at least 2 buckets are required")]
    InvalidBucketCount(usize),
    #[error("degenerate feature{}: fewer than 2 distinct buckets", field_suffix(.0))]
    DegenerateFeature(Option<String>),
    #[error("zero variance in dense transform{}", field_suffix(.0))]
    ZeroVariance(Option<String>),
    #[error("bucket index {index} out of range for {buckets} buckets")]
    IndexOutOfRange { index: usize, buckets: usize },
    #[error("value {value} is outside the domain of the log transform")]
    TransformDomain { value: f64 },
    #[error("missing value for column `{column}`{}", row_suffix(.row))]
    MissingValue { column: String, row: Option<usize> },
    #[error("cannot parse `{value}` in column `{column}`{}", row_suffix(.row))]
    Parse {
        column: String,
        value: String,
        row: Option<usize>,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("unsupported model kind `{0}`")]
    UnsupportedKind(String),
    #[error("invalid model spec: {0}")]
    InvalidModelSpec(String),

    #[error("probe set is empty")]
    EmptyProbeSet,
    #[error("no numerical field is eligible for disturbance")]
    NoEligibleFields,
    #[error("field `{0}` is not eligible for disturbance")]
    IneligibleField(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("no user has both positive and negative labels")]
    NoComparableUsers,
    #[error("base metric equals 0.5; relative improvement is undefined")]
    RandomBase,
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("schema mismatch: column `{0}` not found in header")]
    SchemaMismatch(String),
    #[error("file {0} has no data")]
    EmptyFile(PathBuf),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn field_suffix(field: &Option<String>) -> String {
    field
        .as_ref()
        .map(|f| format!(" `{f}`"))
        .unwrap_or_default()
}

fn row_suffix(row: &Option<usize>) -> String {
    row.map(|r| format!(" at row {r}")).unwrap_or_default()
}
