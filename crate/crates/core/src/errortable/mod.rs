//! Error tables: counterexample logs typed by explicit/implicit and
//! ordered/unordered features, with the analyses that feed back into
//! sampling.

mod feedback;
mod frequent;
mod pca;
mod schema;
mod table;

use std::path::Path;

use thiserror::Error;

pub use feedback::{
    analyze, derive_feedback, resolve_combo, AnalysisReport, FeedbackOptions, FeedbackOutcome,
    FeedbackSpec, ResolvedCombo,
};
pub use frequent::{frequent_unordered, FrequentSet};
pub use pca::{pca_ordered, Loading, PcaOptions};
pub use schema::{Column, Domain, FeatureKind, FeatureOrder, FeatureSchema, FeatureValue};
pub use table::{feature_value, ErrorRow, ErrorTable, ErrorTableWriter};

#[derive(Debug, Error)]
pub enum ErrorTableError {
    #[error("only misclassified images belong in the error table (p={precision}, r={recall})")]
    NotACounterexample { precision: f64, recall: f64 },
    #[error("value {value} outside the domain of column '{column}'")]
    OutOfDomain { column: String, value: String },
    #[error("image lacks feature '{0}'")]
    MissingFeature(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("degenerate table: all rows are identical on the ordered features")]
    Degenerate,
    #[error("analysis: {0}")]
    Analysis(String),
    #[error("column '{column}' references unknown asset value '{value}'")]
    UnknownValue { column: String, value: String },
    #[error("no frequent combination resolves to library assets: {0}")]
    Unresolvable(String),
    #[error("table format: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ErrorTableError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ErrorTableError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
