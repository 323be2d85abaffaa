use std::path::Path;

use serde::Serialize;

use vlat_core::annotations::write_records_jsonl;
use vlat_core::annotator::{run_annotation, AnnotationRun, CostLedger, RunOptions};
use vlat_core::metrics::{PositionBias, POSITION_BIAS_PERMUTATIONS};
use vlat_core::report::ReportMeta;

use crate::config::{config_hash, report_meta, FileConfig, ResolvedBackend};
use crate::{AnnotateArgs, CliError};

use super::{annotation_io_error, build_backend, load_corpus, load_template, out_dir, write_json};

/// The merged, fully resolved settings of one annotate invocation; hashed
/// into the report for reproducibility.
#[derive(Serialize)]
pub struct AnnotateSettings {
    pub corpus: String,
    pub backend: ResolvedBackend,
    pub template_id: String,
    pub batch_size: usize,
    pub token_budget: u64,
    pub parallelism: usize,
    pub price_per_1000: f64,
    pub limit: Option<usize>,
    pub seed: u64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    meta: &'a ReportMeta,
    run_id: &'a str,
    backend: &'a str,
    model: &'a str,
    template_id: &'a str,
    batch_size: usize,
    posts_in: usize,
    annotated: usize,
    failed: usize,
    ledger: &'a CostLedger,
    position_bias: Option<&'a PositionBias>,
}

pub fn run(args: &AnnotateArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
    if args.limit == Some(0) {
        return Err(CliError::Usage("--limit must be at least 1".into()));
    }
    let corpus_path = args
        .corpus
        .clone()
        .or_else(|| config.corpus.path.clone())
        .ok_or_else(|| CliError::Usage("no corpus given (--corpus or [corpus] path)".into()))?;
    let (corpus, _) = load_corpus(&corpus_path, config.corpus.format.as_deref())?;
    let template = load_template(
        args.template
            .as_deref()
            .or(config.template.path.as_deref()),
        args.builtin_template
            .as_deref()
            .or(config.template.builtin.as_deref()),
    )?;
    let mut resolved = ResolvedBackend::from(&config.backend, args.backend.as_deref());
    if let Some(rules) = &args.mock_rules {
        resolved.mock_rules = Some(rules.clone());
    }
    if let Some(fixture) = &args.fixture {
        resolved.fixture = Some(fixture.clone());
    }
    let limit = args.limit.or(config.annotate.limit);
    let posts = match limit {
        Some(n) => corpus.sample(n, seed).map_err(super::corpus_error)?,
        None => corpus.posts().to_vec(),
    };
    let settings = AnnotateSettings {
        corpus: corpus_path.display().to_string(),
        backend: resolved.clone(),
        template_id: template.template_id.clone(),
        batch_size: args
            .batch_size
            .or(config.annotate.batch_size)
            .unwrap_or(50),
        token_budget: args
            .token_budget
            .or(config.annotate.token_budget)
            .unwrap_or(128_000),
        parallelism: args
            .parallelism
            .or(config.annotate.parallelism)
            .unwrap_or(4),
        price_per_1000: args
            .price_per_1000
            .or(config.annotate.price_per_1000)
            .unwrap_or(vlat_core::annotator::DEFAULT_PRICE_PER_1000),
        limit,
        seed,
    };
    let run_id = args
        .run_id
        .clone()
        .or_else(|| config.annotate.run_id.clone())
        .unwrap_or_else(|| format!("run-{}", config_hash(&settings)));
    let options = RunOptions {
        run_id,
        batch_size: settings.batch_size,
        token_budget: settings.token_budget,
        parallelism: settings.parallelism,
        price_per_1000_tokens: settings.price_per_1000,
    };
    let backend = build_backend(&resolved)?;
    let run = run_annotation(
        &posts,
        &template,
        backend.as_ref(),
        &resolved.to_backend_config(),
        &options,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    let meta = report_meta(&settings, seed, &[corpus_path.as_path()])?;
    write_outputs(&dir, &run, &meta, posts.len(), seed)?;
    println!(
        "annotated {}/{} posts in {:.1?}; estimated cost ${:.4} (${:.6}/post); outputs in {}",
        run.annotations.len(),
        posts.len(),
        run.ledger.wall_time,
        run.ledger.total_cost,
        run.ledger.cost_per_post,
        dir.display(),
    );
    match (run.annotations.is_empty(), run.failed_post_count()) {
        (_, 0) => Ok(()),
        (true, failed) => {
            let first = run
                .failures
                .first()
                .map(|f| f.error.clone())
                .unwrap_or_default();
            let _ = failed;
            Err(CliError::Backend(format!(
                "no posts could be annotated; first failure: {first}"
            )))
        }
        (false, failed) => Err(CliError::Partial { failed }),
    }
}

fn write_outputs(
    dir: &Path,
    run: &AnnotationRun,
    meta: &ReportMeta,
    posts_in: usize,
    seed: u64,
) -> Result<(), CliError> {
    write_records_jsonl(&dir.join("annotations.jsonl"), &run.to_records())
        .map_err(annotation_io_error)?;
    if !run.failures.is_empty() {
        let lines: Vec<String> = run
            .failures
            .iter()
            .map(|f| serde_json::to_string(f).expect("failure serializes"))
            .collect();
        super::write_text(&dir.join("failures.jsonl"), &format!("{}\n", lines.join("\n")))?;
    }
    let bias = run.position_bias(POSITION_BIAS_PERMUTATIONS, seed).ok();
    let report = RunReport {
        meta,
        run_id: &run.run_id,
        backend: &run.config.endpoint,
        model: &run.config.model_name,
        template_id: &run.template_id,
        batch_size: run.batch_size,
        posts_in,
        annotated: run.annotations.len(),
        failed: run.failed_post_count(),
        ledger: &run.ledger,
        position_bias: bias.as_ref(),
    };
    write_json(&dir.join("run_report.json"), &report)
}
