use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    ExtraColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparseableNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: unknown level `{value}`")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("numeric column `{0}` has zero variance; drop it from the schema or mark it constant")]
    ZeroVariance(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{op} needs at least {needed} rows, got {got}")]
    TooFewRows { op: &'static str, needed: usize, got: usize },
    #[error("split leaves one side empty ({train} train / {test} test rows)")]
    EmptySplit { train: usize, test: usize },
    #[error("incompatible models: {0}")]
    IncompatibleModels(String),
    #[error("sensitive group {0} has no samples")]
    MissingGroup(usize),
    #[error("{rate} undefined for sensitive group {group}: no samples with y={label}")]
    UndefinedRate { rate: &'static str, group: usize, label: u8 },
    #[error("target has a single class; a forest cannot be fit")]
    DegenerateForest,
    #[error("forest has no trees")]
    EmptyForest,
    #[error("empty input")]
    EmptyInput,
    #[error("zero-variance data cannot be projected")]
    DegenerateData,
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
