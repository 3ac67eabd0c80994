use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A library error with the step that raised it.
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: causet::Error,
    },
    #[error("query spec {path}: {message}")]
    Spec { path: String, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core { source, .. } => source.kind(),
            CliError::Spec { .. } => "SpecError",
            CliError::SchemaMismatch(_) => "SchemaMismatch",
            CliError::Io { .. } => "IoError",
            CliError::Argument(_) => "InvalidArgument",
        }
    }

    /// The machine-readable block printed on stderr.
    pub fn to_block(&self) -> ErrorBlock {
        ErrorBlock {
            error: ErrorBody {
                kind: self.kind().to_string(),
                message: self.to_string(),
                context: match self {
                    CliError::Core { context, .. } => Some(context.clone()),
                    _ => None,
                },
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBlock {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

pub type Result<T> = std::result::Result<T, CliError>;

pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for causet::Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: ctx(),
            source,
        })
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
