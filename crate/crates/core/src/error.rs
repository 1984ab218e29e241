use thiserror::Error;

use crate::population::{Group, Scope};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("mass-sum: cell masses sum to {total}, expected 1")]
    MassSum { total: f64 },

    #[error("invalid cell {id:?}: field {field} {message}")]
    InvalidCell {
        id: String,
        field: &'static str,
        message: String,
    },

    #[error("duplicate cell id {0:?}")]
    DuplicateId(String),

    #[error("population has no cells")]
    NoCells,

    #[error("predictor {predictor:?} has no score for cell {cell:?}")]
    MissingScore { predictor: String, cell: String },

    #[error("predictor {predictor:?} scores unknown cell {cell:?}")]
    UnknownCell { predictor: String, cell: String },

    #[error("predictor {predictor:?} score {score} for cell {cell:?} is {message}")]
    InvalidScore {
        predictor: String,
        cell: String,
        score: f64,
        message: String,
    },

    #[error("predictor {predictor:?} does not match the population ({expected} cells, got {actual})")]
    PredictorShape {
        predictor: String,
        expected: usize,
        actual: usize,
    },

    #[error("unknown predictor {0:?}")]
    UnknownPredictor(String),

    #[error("scope {0} is empty")]
    EmptyScope(Scope),

    #[error("predictor {predictor:?} is not calibrated on {scope} (max deviation {max_deviation:e})")]
    NotCalibrated {
        predictor: String,
        scope: Scope,
        max_deviation: f64,
    },

    #[error("{refined:?} does not refine {base:?} on {scope} (max deviation {max_deviation:e})")]
    NotRefinement {
        base: String,
        refined: String,
        scope: Scope,
        max_deviation: f64,
    },

    #[error("infinite divergence at cell {cell:?}: reference {reference} against score {score}")]
    InfiniteDivergence {
        cell: String,
        reference: f64,
        score: f64,
    },

    #[error("undersampled: crossed cell (z={z}, q={q}) received no samples")]
    Undersampled { z: f64, q: f64 },

    #[error("selection rule has no entry for score {score} in group {group}")]
    MissingRuleEntry { score: f64, group: Group },

    #[error("needs-two-groups: group {0} is empty")]
    NeedsTwoGroups(Group),

    #[error("degenerate-rate: {metric} is undefined in group {group} (base rate {base_rate})")]
    DegenerateRate {
        metric: &'static str,
        group: Group,
        base_rate: f64,
    },

    #[error("improvement violated for {spec}: {detail}")]
    ImprovementViolated { spec: String, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::MassSum { .. } => "mass-sum",
            Error::InvalidCell { .. } => "invalid-cell",
            Error::DuplicateId(_) => "duplicate-id",
            Error::NoCells => "no-cells",
            Error::MissingScore { .. } => "missing-score",
            Error::UnknownCell { .. } => "unknown-cell",
            Error::InvalidScore { .. } => "invalid-score",
            Error::PredictorShape { .. } => "predictor-shape",
            Error::UnknownPredictor(_) => "unknown-predictor",
            Error::EmptyScope(_) => "empty-scope",
            Error::NotCalibrated { .. } => "not-calibrated",
            Error::NotRefinement { .. } => "not-refinement",
            Error::InfiniteDivergence { .. } => "infinite-divergence",
            Error::Undersampled { .. } => "undersampled",
            Error::MissingRuleEntry { .. } => "missing-rule-entry",
            Error::NeedsTwoGroups(_) => "needs-two-groups",
            Error::DegenerateRate { .. } => "degenerate-rate",
            Error::ImprovementViolated { .. } => "improvement-violated",
            Error::InvalidParameter(_) => "invalid-parameter",
        }
    }
}
