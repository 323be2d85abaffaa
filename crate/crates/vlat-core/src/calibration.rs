//! Batch-size calibration: sweep sizes over the same posts, measure how the
//! label distribution drifts, and pick the size whose distribution sits
//! closest (L1) to a human reference distribution.

use serde::Serialize;
use thiserror::Error;

use crate::annotations::AnnotationSet;
use crate::annotator::{
    run_annotation, Backend, BackendConfig, PromptTemplate, RunError, RunOptions,
};
use crate::corpus::Post;
use crate::metrics::{
    agreement, class_distribution, AgreementReport, Distribution, Granularity, MetricsError,
};

/// The sweep grid used when none is configured.
pub const DEFAULT_SWEEP_SIZES: [usize; 5] = [10, 20, 50, 100, 200];

/// A size is unusable when more than this share of its posts failed.
pub const MAX_FAILED_SHARE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no batch sizes given")]
    NoSizes,
    #[error("no human annotation sets given")]
    NoHumanSets,
    #[error("human annotation sets share no post ids")]
    EmptyIntersection,
    #[error("no usable batch size (every size exceeded the failure threshold)")]
    NoUsableSize,
    #[error("sweep distances not computed yet")]
    NotSelected,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One swept batch size and what it produced.
#[derive(Debug, Clone, Serialize)]
pub struct SizeOutcome {
    pub batch_size: usize,
    /// Coarse class distribution of the kept annotations; absent when the
    /// whole run failed.
    pub distribution: Option<Distribution>,
    pub annotated_posts: usize,
    pub failed_posts: usize,
    pub usable: bool,
    /// Agreement against each supplied human set, in input order.
    pub agreements: Vec<AgreementReport>,
}

/// Sweep output plus, once selected, per-size distances and the chosen size.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub batch_sizes: Vec<usize>,
    pub outcomes: Vec<SizeOutcome>,
    pub distance_metric: String,
    /// L1 distance to the reference, aligned with `outcomes`; filled by
    /// [`select_batch_size`].
    pub distances: Vec<Option<f64>>,
    pub chosen_size: Option<usize>,
}

impl SweepResult {
    /// Assemble a sweep result from precomputed distributions, as when
    /// re-rendering a published table rather than re-running a backend.
    pub fn from_distributions(entries: &[(usize, Distribution)]) -> SweepResult {
        let outcomes = entries
            .iter()
            .map(|(batch_size, distribution)| SizeOutcome {
                batch_size: *batch_size,
                distribution: Some(distribution.clone()),
                annotated_posts: distribution.n,
                failed_posts: 0,
                usable: true,
                agreements: Vec::new(),
            })
            .collect();
        SweepResult {
            batch_sizes: entries.iter().map(|(s, _)| *s).collect(),
            outcomes,
            distance_metric: "l1".into(),
            distances: vec![None; entries.len()],
            chosen_size: None,
        }
    }

    pub fn outcome(&self, batch_size: usize) -> Option<&SizeOutcome> {
        self.outcomes.iter().find(|o| o.batch_size == batch_size)
    }
}

/// Run one annotation pass per batch size over the same posts, recording the
/// coarse distribution each size produces and, when human sets are supplied,
/// the per-size agreement against each of them.
pub fn sweep(
    posts: &[Post],
    template: &PromptTemplate,
    backend: &dyn Backend,
    config: &BackendConfig,
    base_options: &RunOptions,
    batch_sizes: &[usize],
    human_sets: &[AnnotationSet],
) -> Result<SweepResult, SweepError> {
    if batch_sizes.is_empty() {
        return Err(SweepError::NoSizes);
    }
    let mut outcomes = Vec::with_capacity(batch_sizes.len());
    for &batch_size in batch_sizes {
        let options = RunOptions {
            run_id: format!("{}-s{batch_size}", base_options.run_id),
            batch_size,
            ..base_options.clone()
        };
        let run = run_annotation(posts, template, backend, config, &options)?;
        let set = run
            .annotation_set()
            .expect("run annotations are unique per post");
        let distribution = if set.is_empty() {
            None
        } else {
            Some(class_distribution(&set, Granularity::Coarse)?)
        };
        let failed_posts = run.failed_post_count();
        let agreements = if set.is_empty() {
            Vec::new()
        } else {
            human_sets
                .iter()
                .filter_map(|human| agreement(human, &set, Granularity::Coarse).ok())
                .collect()
        };
        outcomes.push(SizeOutcome {
            batch_size,
            distribution,
            annotated_posts: set.len(),
            failed_posts,
            usable: (failed_posts as f64) <= MAX_FAILED_SHARE * posts.len() as f64,
            agreements,
        });
    }
    Ok(SweepResult {
        batch_sizes: batch_sizes.to_vec(),
        outcomes,
        distance_metric: "l1".into(),
        distances: vec![None; batch_sizes.len()],
        chosen_size: None,
    })
}

/// Unweighted mean of the per-annotator coarse distributions over the posts
/// all annotators labeled.
pub fn reference_distribution(human_sets: &[AnnotationSet]) -> Result<Distribution, SweepError> {
    if human_sets.is_empty() {
        return Err(SweepError::NoHumanSets);
    }
    let mut common: Vec<String> = human_sets[0].post_ids().map(str::to_string).collect();
    for set in &human_sets[1..] {
        common.retain(|id| set.label(id).is_some());
    }
    if common.is_empty() {
        return Err(SweepError::EmptyIntersection);
    }
    let mut mean = vec![0.0f64; Granularity::Coarse.class_count()];
    for set in human_sets {
        let mut counts = vec![0usize; mean.len()];
        for id in &common {
            let label = set.label(id).expect("id is in the intersection");
            counts[Granularity::Coarse.class_index(label)] += 1;
        }
        for (m, c) in mean.iter_mut().zip(counts) {
            *m += c as f64 / common.len() as f64 / human_sets.len() as f64;
        }
    }
    Ok(Distribution::from_shares(
        Granularity::Coarse,
        mean,
        common.len(),
    ))
}

/// Pick the usable batch size whose distribution minimizes the L1 distance
/// to `reference`; ties go to the smallest size. Distances are recorded in
/// the sweep result.
pub fn select_batch_size(
    sweep: &mut SweepResult,
    reference: &[f64],
) -> Result<usize, SweepError> {
    let mut order: Vec<usize> = (0..sweep.outcomes.len()).collect();
    order.sort_by_key(|&i| sweep.outcomes[i].batch_size);
    let mut best: Option<(f64, usize)> = None;
    for i in order {
        let outcome = &sweep.outcomes[i];
        let Some(distribution) = &outcome.distribution else {
            continue;
        };
        let distance = distribution.l1_distance(reference);
        sweep.distances[i] = Some(distance);
        if !outcome.usable {
            continue;
        }
        // strict comparison in ascending size order implements the tie-break
        if best.is_none_or(|(d, _)| distance < d) {
            best = Some((distance, outcome.batch_size));
        }
    }
    let (_, chosen) = best.ok_or(SweepError::NoUsableSize)?;
    sweep.chosen_size = Some(chosen);
    Ok(chosen)
}
