//! Temporal analysis: session segmentation by inactivity thresholds,
//! violent-share time series under several scopes, OLS trend fitting with
//! significance stars, and per-user engagement statistics.

pub mod engagement;
pub mod regression;
pub mod series;
pub mod session;

use thiserror::Error;

pub use engagement::{engagement_stats, EngagementStats};
pub use regression::{ols_fit, significance_stars, RegressionResult, WeightMode};
pub use series::{
    directedness_series, violent_share_series, Bin, BinnedSeries, Category, Scope,
    SECONDS_PER_YEAR,
};
pub use session::{
    parse_duration, segment, Session, SessionConfig, STANDARD_THRESHOLDS,
};

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("invalid duration {0:?}")]
    BadDuration(String),
    #[error("duration must be positive")]
    NonPositiveDuration,
    #[error("no annotated posts in scope")]
    NoAnnotatedPosts,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("regression needs at least 3 populated bins, got {0}")]
    TooFewBins(usize),
    #[error("time axis has zero variance")]
    ZeroTimeVariance,
}
