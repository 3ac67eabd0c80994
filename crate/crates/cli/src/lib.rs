//! Query-driven runs over the `causet` library: query specs, reports,
//! synthetic validation and report comparison.

pub mod compare;
pub mod error;
pub mod query;
pub mod spec;
pub mod table;
pub mod validation;

pub use error::{CliError, Result};
pub use query::{run_query, QueryReport, QueryRun};
pub use spec::{resolve_seed, QuerySpec};
pub use validation::{run_validation, ValidationConfig, ValidationReport};
