use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph contains a cycle through node `{0}`")]
    Cycle(String),
    #[error("role error: {0}")]
    Role(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("effect is not identifiable: every blocking set needs unobserved node(s) {}", .unobserved.join(", "))]
    NotIdentifiable { unobserved: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` row {row}: value `{value}` conflicts with kind {kind}")]
    TypeConflict {
        column: String,
        row: usize,
        value: String,
        kind: String,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` has kind {found}, expected {expected}")]
    Kind {
        column: String,
        found: String,
        expected: String,
    },
    #[error("column `{0}` contains missing values")]
    MissingData(String),
    #[error("frame has no rows")]
    EmptyFrame,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("treatment `{0}` has a single class; both arms are required")]
    SingleClass(String),
    #[error("no propensity stratum contains both arms")]
    NoValidStrata,
    #[error("degenerate range: {0}")]
    DegenerateRange(String),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Cycle(_) => "CycleError",
            Error::Role(_) => "RoleError",
            Error::UnknownNode(_) => "UnknownNode",
            Error::NotIdentifiable { .. } => "NotIdentifiable",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::RaggedRow { .. } => "RaggedRowError",
            Error::TypeConflict { .. } => "TypeConflictError",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::DuplicateColumn(_) => "DuplicateColumn",
            Error::Kind { .. } => "KindError",
            Error::MissingData(_) => "MissingDataError",
            Error::EmptyFrame => "EmptyFrame",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SingleClass(_) => "SingleClassError",
            Error::NoValidStrata => "NoValidStrataError",
            Error::DegenerateRange(_) => "DegenerateRange",
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
