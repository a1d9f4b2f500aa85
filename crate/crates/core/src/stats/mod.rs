//! Statistical battery: rank correlation, distribution shape, significance
//! tests, split-half reliability and comparison against external heatmaps.

mod compare;
mod consistency;
mod correlation;
mod moments;
pub mod special;

use thiserror::Error;

pub use compare::{compare_to_external, permutation_p, CategoryMean, ComparisonResult, ImageComparison, MIN_COMMON_SIDE};
pub use consistency::{
    median_split_efficiency, split_half_consistency, GroupSummary, ImageMaps, ImageSplit, MedianSplitResult,
    SplitHalfResult,
};
pub use correlation::{average_ranks, count_ranks, pearson, spearman, spearman_counts};
pub use moments::{kurtosis, ks_normality, mean, t_test_ind, KsResult, TTest, KS_CRITICAL_COEFF};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("correlation undefined: one side is constant")]
    DegenerateInput,
    #[error("values have zero variance")]
    ZeroVariance,
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("every image with enough pairs has all of them tied at the median")]
    NoSplit,
    #[error("no heatmap for image {0}")]
    MissingHeatmap(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("heatmaps mix sources {0} and {1}")]
    SourceMismatch(String, String),
    #[error("non-finite input value")]
    NonFinite,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;
