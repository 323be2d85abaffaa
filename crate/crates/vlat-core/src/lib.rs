//! Toolkit for annotating forum corpora with a violence taxonomy through a
//! batched chat-completion backend, measuring annotation quality against
//! human baselines, calibrating the batch size against a reference label
//! distribution, and analyzing how violent language drifts over time.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] ingests JSONL/CSV post files, normalizes text, and exposes
//!    deterministic sampling and per-user timelines.
//! 2. [`taxonomy`] defines the seven-label violence scheme and its parsing.
//! 3. [`annotator`] renders prompts, batches posts, talks to a backend
//!    (remote HTTP, deterministic mock, or replay-from-fixture), parses and
//!    aligns responses, and accounts tokens and cost.
//! 4. [`metrics`] computes Cohen's kappa, weighted/macro F1, class
//!    distributions, and the position-in-batch bias test.
//! 5. [`calibration`] sweeps batch sizes and selects the one whose label
//!    distribution sits closest to the human reference.
//! 6. [`temporal`] segments user timelines into sessions and fits OLS trends
//!    to violent-share series.
//! 7. [`report`] renders the Markdown/JSON report tables.

pub mod annotations;
pub mod annotator;
pub mod calibration;
pub mod corpus;
pub mod metrics;
pub mod report;
pub mod taxonomy;
pub mod temporal;

pub use annotations::{read_annotation_sets, write_records_jsonl, AnnotationRecord, AnnotationSet};
pub use annotator::{
    builtin_template, estimate_cost, run_annotation, AnnotationRun, Backend, BackendConfig,
    MockBackend, MockRules, PromptTemplate, RemoteBackend, ReplayBackend, RunOptions,
};
pub use calibration::{
    reference_distribution, select_batch_size, sweep, SweepResult, DEFAULT_SWEEP_SIZES,
};
pub use corpus::{ingest, preprocess, Corpus, CorpusFormat, Post, UserTimeline};
pub use metrics::{
    agreement, class_distribution, cohen_kappa, confusion, f1_scores, position_bias,
    AgreementReport, ConfusionMatrix, Distribution, Granularity,
};
pub use taxonomy::{label_code, parse_label, Annotation, Directedness, Label, ViolenceClass};
pub use temporal::{
    directedness_series, engagement_stats, ols_fit, segment, significance_stars,
    violent_share_series, BinnedSeries, Category, RegressionResult, Scope, Session,
    SessionConfig, WeightMode,
};
