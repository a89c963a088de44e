//! Knowledge-augmented risk assessment: questionnaires, reference LOK,
//! comparison consistency, LP-calibrated LOK scales, IP consensus, the horn
//! plot and POS consensus.

mod calibrate;
mod comparisons;
mod consensus;
mod horn;
mod pos;
mod questionnaire;
mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::Id;
use crate::optim::OptimError;

pub use calibrate::{
    calibrate_scale, calibration_lp, verify_scale, Calibration, LokScale, ScaleScope, DEFAULT_EPSILON,
};
pub use comparisons::{
    contract, longest_strict_chain, ConsistencyState, Explanation, Judgement, LokRelation, PairwiseComparison,
};
pub use consensus::{
    choice_judgement, consensus_comparisons, consensus_with_limit, tally, ConsensusOutcome, PairVotes, NO_RELATION,
};
pub use horn::{allowed_pos_region, HornPlotConfig, PosRegion, REGION_TOL};
pub use pos::{
    candidate_pos_rollup, consensus_pos, median, submit_pos, FinalPos, PosAssessment, PosRollup, RollupMode,
};
pub use questionnaire::{encode_answers, Answer, AnswerKind, AnswerSet, Question, RiskFactor};
pub use reference::{reference_lok, CorpusEntry, REFERENCE_K};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KaraError {
    #[error("invalid questionnaire: {0}")]
    InvalidQuestionnaire(String),

    #[error("question {0} is not answered")]
    IncompleteAnswers(String),

    #[error("question {question}: {reason}")]
    InvalidAnswer { question: String, reason: String },

    #[error("reference corpus has {found} assessed candidates, at least {required} required")]
    CorpusTooSmall { found: usize, required: usize },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("contradicts {chain}")]
    Contradiction {
        chain: String,
        explanation: Box<Explanation>,
    },

    #[error("strict chain of {max_chain} steps does not fit with margin {epsilon}; try epsilon below {suggested_epsilon:.4}")]
    ScaleSaturation {
        max_chain: usize,
        epsilon: f64,
        suggested_epsilon: f64,
    },

    #[error("candidate {0} is not on the scale")]
    UnknownCandidate(Id),

    #[error("no valid POS assessments")]
    NoValidAssessments,

    #[error("LOK {0} is outside [0, 1]")]
    InvalidLok(f64),

    #[error("POS {0} is outside [0, 1]")]
    InvalidPos(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Optim(#[from] OptimError),
}

impl KaraError {
    pub fn code(&self) -> &'static str {
        match self {
            KaraError::InvalidQuestionnaire(_) => "invalid-questionnaire",
            KaraError::IncompleteAnswers(_) => "incomplete-answers",
            KaraError::InvalidAnswer { .. } => "invalid-answer",
            KaraError::CorpusTooSmall { .. } => "corpus-too-small",
            KaraError::InvalidComparison(_) => "invalid-comparison",
            KaraError::Contradiction { .. } => "contradiction",
            KaraError::ScaleSaturation { .. } => "scale-saturation",
            KaraError::UnknownCandidate(_) => "unknown-candidate",
            KaraError::NoValidAssessments => "no-valid-assessments",
            KaraError::InvalidLok(_) => "invalid-lok",
            KaraError::InvalidPos(_) => "invalid-pos",
            KaraError::InvalidConfig(_) => "invalid-config",
            KaraError::Optim(e) => e.code(),
        }
    }
}

/// One marker of the similar-assessment overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayEntry {
    pub candidate: Id,
    pub similarity: f64,
    pub pos: f64,
    pub lok: f64,
}
