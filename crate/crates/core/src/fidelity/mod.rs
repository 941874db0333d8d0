//! How closely a twin reproduces the device: alignment similarity of
//! response-time and status-code traces, plus Wilcoxon signed-rank and
//! Fisher exact tests on the paired data.

mod align;
mod report;
mod stats;

pub use align::{
    align, align_similarity, similarity_categorical, similarity_numeric, Alignment,
    AlignmentConfig, Channel,
};
pub use report::{
    batch_report, compare, mean_std, report, run_report, status_table, BatchReport, ChannelStats,
    RunPair, RunReport, SimilarityReport,
};
pub use stats::{
    average_ranks, fisher_exact, fisher_exact_or_one, wilcoxon_signed_rank, WilcoxonResult,
    WILCOXON_EXACT_MAX_N, WILCOXON_MIN_PAIRS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FidelityError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("cannot align a numeric channel with a categorical one")]
    MixedChannels,
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} non-zero differences; the signed-rank test needs at least 5")]
    TooFewPairs(usize),
    #[error("a row or column of the contingency table is empty")]
    DegenerateMargins,
    #[error("invalid alignment configuration: {0}")]
    InvalidConfig(String),
    #[error("no runs to report")]
    NoRuns,
    #[error("i/o: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests;
