//! Prompt construction, batching, backend submission, response parsing, and
//! cost accounting for annotation runs.

pub mod backend;
pub mod batch;
pub mod cost;
pub mod parse;
pub mod remote;
pub mod run;
pub mod template;

pub use backend::{
    submit, Backend, BackendConfig, BackendError, ChatMessage, ChatRequest, Completion,
    LexiconRule, MockBackend, MockRules, RateLimiter, ReplayBackend, ReplayFixture, SubmitOutcome,
    TokenUsage,
};
pub use batch::{
    assemble_batches, BatchError, BatchPost, BatchRequest, CharsPerToken, OversizedPost,
    TokenEstimator,
};
pub use cost::{
    estimate_cost, CostLedger, CostProjection, DEFAULT_POST_TOKENS, DEFAULT_PRICE_PER_1000,
    DEFAULT_PROMPT_TOKENS,
};
pub use parse::{parse_response, ParseError};
pub use remote::RemoteBackend;
pub use run::{
    run_annotation, run_annotation_with, AnnotationRun, BatchFailure, RunAnnotation, RunError,
    RunOptions,
};
pub use template::{
    builtin_template, render_request, PromptTemplate, ResponseMode, TemplateError,
    BUILTIN_TEMPLATE_IDS, STRUCTURED_OUTPUT_INSTRUCTION,
};
