//! Evaluation tooling: agreement with human graders and robustness of the
//! final score under synthetic degradation.

mod correlation;
mod monotonicity;
mod perturb;

pub use correlation::{
    average_ranks, correlate, format_agreement_table, kendall, pearson, spearman, CorrelationError,
    KendallVariant, Method, ScorePairSet, PUBLISHED_AGREEMENT,
};
pub use monotonicity::{
    monotonicity_report, HarnessError, MonotonicityRow, MonotonicityTable, MIN_TRIALS,
};
pub use perturb::{perturb, PerturbationError, PerturbationSpec};
