//! Orchestration of a full annotation run: assemble batches, submit them
//! with bounded parallelism, parse and align responses, and recover from
//! bad batches by one intact retry followed by bisection down to single
//! posts. A bad batch never aborts the run; unrecovered posts end up in the
//! failure list, so every input post is accounted for exactly once.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::backend::{
    submit, Backend, BackendConfig, BackendError, ConfigError, RateLimiter, TokenUsage,
};
use super::batch::{
    assemble_batches, estimate_prompt_tokens, BatchError, BatchRequest, CharsPerToken,
    TokenEstimator,
};
use super::cost::CostLedger;
use super::parse::parse_response;
use super::template::{PromptTemplate, TemplateError};
use crate::annotations::{AnnotationIoError, AnnotationRecord, AnnotationSet};
use crate::corpus::Post;
use crate::metrics::{position_bias, MetricsError, PositionBias};
use crate::taxonomy::Annotation;

/// Per-run knobs that are not backend connection settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    /// Also used as the annotator id on every produced annotation.
    pub run_id: String,
    pub batch_size: usize,
    pub token_budget: u64,
    /// Upper bound on concurrently in-flight batches.
    pub parallelism: usize,
    pub price_per_1000_tokens: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            run_id: "run".into(),
            batch_size: 50,
            token_budget: 128_000,
            parallelism: 4,
            price_per_1000_tokens: super::cost::DEFAULT_PRICE_PER_1000,
        }
    }
}

/// A batch (or sub-batch) whose posts could not be annotated, with the error
/// that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchFailure {
    pub batch_id: String,
    pub post_ids: Vec<String>,
    pub error: String,
}

/// One annotation plus where in the run it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAnnotation {
    pub annotation: Annotation,
    pub batch_id: String,
    pub ordinal: u32,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, Serialize)]
pub struct AnnotationRun {
    pub run_id: String,
    pub config: BackendConfig,
    pub template_id: String,
    pub batch_size: usize,
    pub annotations: Vec<RunAnnotation>,
    pub ledger: CostLedger,
    pub failures: Vec<BatchFailure>,
}

impl AnnotationRun {
    pub fn to_records(&self) -> Vec<AnnotationRecord> {
        self.annotations
            .iter()
            .map(|a| {
                AnnotationRecord::from_annotation(
                    &a.annotation,
                    Some(a.batch_id.clone()),
                    Some(a.ordinal),
                )
            })
            .collect()
    }

    pub fn annotation_set(&self) -> Result<AnnotationSet, AnnotationIoError> {
        let mut set = AnnotationSet::new(self.run_id.clone());
        for a in &self.annotations {
            set.insert(a.annotation.post_id.clone(), a.annotation.label)?;
        }
        Ok(set)
    }

    pub fn failed_post_count(&self) -> usize {
        self.failures.iter().map(|f| f.post_ids.len()).sum()
    }

    /// (ordinal, labeled-violent) pairs for the position-bias test.
    pub fn position_samples(&self) -> Vec<(u32, bool)> {
        self.annotations
            .iter()
            .map(|a| (a.ordinal, a.annotation.label.is_violent()))
            .collect()
    }

    pub fn position_bias(
        &self,
        permutations: usize,
        seed: u64,
    ) -> Result<PositionBias, MetricsError> {
        position_bias(&self.position_samples(), permutations, seed)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("nothing to annotate")]
    NothingToAnnotate,
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

struct RequestStat {
    post_tokens: u64,
    retries: u64,
    output_estimate: u64,
    usage: Option<TokenUsage>,
}

#[derive(Default)]
struct BatchResult {
    annotations: Vec<RunAnnotation>,
    failures: Vec<BatchFailure>,
    stats: Vec<RequestStat>,
}

impl BatchResult {
    fn merge(&mut self, other: BatchResult) {
        self.annotations.extend(other.annotations);
        self.failures.extend(other.failures);
        self.stats.extend(other.stats);
    }
}

/// Annotate `posts` with the default chars-per-token estimator.
pub fn run_annotation(
    posts: &[Post],
    template: &PromptTemplate,
    backend: &dyn Backend,
    config: &BackendConfig,
    options: &RunOptions,
) -> Result<AnnotationRun, RunError> {
    run_annotation_with(posts, template, backend, config, options, &CharsPerToken)
}

/// Annotate `posts` with a caller-supplied token estimator.
pub fn run_annotation_with(
    posts: &[Post],
    template: &PromptTemplate,
    backend: &dyn Backend,
    config: &BackendConfig,
    options: &RunOptions,
    estimator: &dyn TokenEstimator,
) -> Result<AnnotationRun, RunError> {
    if posts.is_empty() {
        return Err(RunError::NothingToAnnotate);
    }
    template.validate()?;
    config.validate()?;
    let started = Instant::now();
    let (batches, oversized) = assemble_batches(
        posts,
        template,
        options.batch_size,
        options.token_budget,
        estimator,
    )?;
    let mut failures: Vec<BatchFailure> = oversized
        .iter()
        .map(|o| BatchFailure {
            batch_id: format!("oversized:{}", o.post_id),
            post_ids: vec![o.post_id.clone()],
            error: format!(
                "post alone needs ~{} tokens, over the {}-token budget",
                o.estimated_tokens, o.token_budget
            ),
        })
        .collect();
    let limiter = RateLimiter::new(config.rate_limit_per_min);
    let worker = BatchWorker {
        template,
        backend,
        config,
        limiter: &limiter,
        estimator,
        run_id: &options.run_id,
    };
    let results: Mutex<Vec<Option<BatchResult>>> =
        Mutex::new((0..batches.len()).map(|_| None).collect());
    let next_index = AtomicUsize::new(0);
    let workers = options.parallelism.max(1).min(batches.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next_index.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(index) else {
                    break;
                };
                let result = worker.annotate(batch, true);
                results.lock().unwrap()[index] = Some(result);
            });
        }
    });

    let mut annotations = Vec::with_capacity(posts.len());
    let mut ledger = CostLedger::new(
        estimate_prompt_tokens(template, estimator),
        options.price_per_1000_tokens,
    );
    for slot in results.into_inner().unwrap() {
        let result = slot.expect("every batch index is processed");
        annotations.extend(result.annotations);
        failures.extend(result.failures);
        for stat in result.stats {
            ledger.record_request(stat.post_tokens, stat.retries, stat.output_estimate, stat.usage);
        }
    }
    ledger.finalize(annotations.len() as u64, started.elapsed());

    let run = AnnotationRun {
        run_id: options.run_id.clone(),
        config: config.clone(),
        template_id: template.template_id.clone(),
        batch_size: options.batch_size,
        annotations,
        ledger,
        failures,
    };
    debug_assert_eq!(
        run.annotations.len() + run.failed_post_count(),
        posts.len(),
        "post conservation violated"
    );
    Ok(run)
}

struct BatchWorker<'a> {
    template: &'a PromptTemplate,
    backend: &'a dyn Backend,
    config: &'a BackendConfig,
    limiter: &'a RateLimiter,
    estimator: &'a dyn TokenEstimator,
    run_id: &'a str,
}

enum AttemptFailure {
    /// Parse or alignment trouble: bisection can help.
    BadResponse(String),
    /// Transport, auth, or protocol trouble: bisection would not help.
    Backend(String),
}

impl BatchWorker<'_> {
    /// One submit+parse attempt; always records a request stat.
    fn attempt(&self, batch: &BatchRequest, result: &mut BatchResult)
        -> Result<Vec<Annotation>, AttemptFailure>
    {
        let post_tokens = batch
            .posts
            .iter()
            .map(|p| self.estimator.estimate(&p.text))
            .sum();
        match submit(self.backend, batch, self.config, self.limiter) {
            Ok(outcome) => {
                result.stats.push(RequestStat {
                    post_tokens,
                    retries: outcome.retries as u64,
                    output_estimate: self.estimator.estimate(&outcome.completion.text),
                    usage: outcome.completion.usage,
                });
                parse_response(
                    &outcome.completion.text,
                    batch,
                    self.template.response_mode,
                    self.run_id,
                )
                .map_err(|e| AttemptFailure::BadResponse(e.to_string()))
            }
            Err(error) => {
                let retries = match &error {
                    BackendError::RetriesExhausted { attempts, .. } => (attempts - 1) as u64,
                    _ => 0,
                };
                result.stats.push(RequestStat {
                    post_tokens,
                    retries,
                    output_estimate: 0,
                    usage: None,
                });
                Err(AttemptFailure::Backend(error.to_string()))
            }
        }
    }

    /// Annotate one batch, retrying it intact once on a bad response and
    /// then bisecting. `allow_intact_retry` is set for original batches
    /// only; sub-batches go straight to further bisection.
    fn annotate(&self, batch: &BatchRequest, allow_intact_retry: bool) -> BatchResult {
        let mut result = BatchResult::default();
        let error = match self.attempt(batch, &mut result) {
            Ok(annotations) => {
                result.annotations = self.with_positions(batch, annotations);
                return result;
            }
            Err(AttemptFailure::Backend(message)) => {
                result.failures.push(BatchFailure {
                    batch_id: batch.batch_id.clone(),
                    post_ids: batch.post_ids(),
                    error: message,
                });
                return result;
            }
            Err(AttemptFailure::BadResponse(message)) => message,
        };
        if allow_intact_retry {
            match self.attempt(batch, &mut result) {
                Ok(annotations) => {
                    result.annotations = self.with_positions(batch, annotations);
                    return result;
                }
                Err(AttemptFailure::Backend(message)) => {
                    result.failures.push(BatchFailure {
                        batch_id: batch.batch_id.clone(),
                        post_ids: batch.post_ids(),
                        error: message,
                    });
                    return result;
                }
                Err(AttemptFailure::BadResponse(_)) => {}
            }
        }
        if batch.len() == 1 {
            result.failures.push(BatchFailure {
                batch_id: batch.batch_id.clone(),
                post_ids: batch.post_ids(),
                error,
            });
            return result;
        }
        for (suffix, half) in self.split(batch) {
            let sub = self.annotate(&half, false);
            let _ = suffix;
            result.merge(sub);
        }
        result
    }

    fn split(&self, batch: &BatchRequest) -> Vec<(usize, BatchRequest)> {
        let mid = batch.posts.len() / 2;
        let halves = [&batch.posts[..mid], &batch.posts[mid..]];
        halves
            .iter()
            .enumerate()
            .map(|(i, part)| {
                let parts: Vec<(String, String)> = part
                    .iter()
                    .map(|p| (p.post_id.clone(), p.text.clone()))
                    .collect();
                (
                    i,
                    BatchRequest::from_texts(
                        format!("{}.{i}", batch.batch_id),
                        self.template,
                        &parts,
                    ),
                )
            })
            .collect()
    }

    fn with_positions(&self, batch: &BatchRequest, annotations: Vec<Annotation>)
        -> Vec<RunAnnotation>
    {
        annotations
            .into_iter()
            .zip(&batch.posts)
            .map(|(annotation, post)| RunAnnotation {
                annotation,
                batch_id: batch.batch_id.clone(),
                ordinal: post.ordinal,
            })
            .collect()
    }
}
