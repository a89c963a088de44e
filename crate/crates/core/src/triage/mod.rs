//! Dataset curation: adjudication sessions, featurization, the learned
//! triage model, ranking and reduction.

mod features;
mod model;
mod reduce;
mod report;
mod session;

use thiserror::Error;

use crate::id::Id;
use crate::model::ModelError;

pub use features::{
    bucket_of, featurize, fnv1a64, ngrams, text_block, FeatureSchema, FeatureVector, NumericFeature, NGRAM_SIZES,
    TEXT_BUCKETS,
};
pub use model::{
    fingerprint, loss_and_gradient, rank_candidates, sigmoid, train_triage_model, Example, TrainConfig, TriageModel,
    MIN_TRAINING_LABELS,
};
pub use reduce::{reduced_size, triage_reduce};
pub use report::{distribution_report, histogram_distance, AttributeReport, Summary, HISTOGRAM_BINS};
pub use session::{
    acceptance_fraction, default_choices, parse_label_csv, write_label_csv, AdjudicationSession, Label, LabelRow,
    SessionInfo, SessionMetrics, SessionStatus, DEFAULT_QUESTION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriageError {
    #[error("session {0} is closed")]
    SessionClosed(Id),

    #[error("candidate {0} is not a member of the session dataset")]
    UnknownCandidate(Id),

    #[error("unknown choice {0:?}")]
    UnknownChoice(String),

    #[error("invalid session: {0}")]
    InvalidChoices(String),

    #[error("label batch: {0}")]
    InvalidBatch(String),

    #[error("{found} labeled candidates, at least {required} required")]
    InsufficientLabels { found: usize, required: usize },

    #[error("all labels carry the same answer")]
    DegenerateLabels,

    #[error("feature dimension {found} does not match the model ({expected})")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("session has no labels")]
    NoLabels,

    #[error("attribute {0} has no numeric values in one of the datasets")]
    NoNumericData(String),

    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),

    #[error(transparent)]
    Model(#[from] ModelError),
}

impl TriageError {
    pub fn code(&self) -> &'static str {
        match self {
            TriageError::SessionClosed(_) => "session-closed",
            TriageError::UnknownCandidate(_) => "unknown-candidate",
            TriageError::UnknownChoice(_) => "unknown-choice",
            TriageError::InvalidChoices(_) => "invalid-session",
            TriageError::InvalidBatch(_) => "invalid-batch",
            TriageError::InsufficientLabels { .. } => "insufficient-labels",
            TriageError::DegenerateLabels => "degenerate-labels",
            TriageError::SchemaMismatch { .. } => "schema-mismatch",
            TriageError::NoLabels => "no-labels",
            TriageError::NoNumericData(_) => "no-numeric-data",
            TriageError::InvalidFraction(_) => "invalid-fraction",
            TriageError::Model(e) => e.code(),
        }
    }
}
