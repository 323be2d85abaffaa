use serde::Serialize;

use vlat_core::calibration::{
    reference_distribution, select_batch_size, sweep as run_sweep, SweepError, SweepResult,
    DEFAULT_SWEEP_SIZES,
};
use vlat_core::metrics::Distribution;
use vlat_core::report::{sweep_markdown, ReportMeta};
use vlat_core::RunOptions;

use crate::config::{config_hash, report_meta, FileConfig, ResolvedBackend};
use crate::{CliError, SweepArgs};

use super::{build_backend, load_annotation_sets, load_corpus, load_template, out_dir};

#[derive(Serialize)]
struct SweepSettings {
    corpus: String,
    backend: ResolvedBackend,
    template_id: String,
    sizes: Vec<usize>,
    limit: Option<usize>,
    seed: u64,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    meta: &'a ReportMeta,
    result: &'a SweepResult,
    reference: Option<&'a Distribution>,
}

fn sweep_error(error: SweepError) -> CliError {
    match error {
        SweepError::Run(e) => CliError::Usage(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn run(args: &SweepArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
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
    let sizes: Vec<usize> = match args.sizes.as_deref() {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad batch size {s:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => config
            .sweep
            .sizes
            .clone()
            .unwrap_or_else(|| DEFAULT_SWEEP_SIZES.to_vec()),
    };
    if sizes.contains(&0) {
        return Err(CliError::Usage("batch sizes must be at least 1".into()));
    }
    let posts = match args.limit.or(config.annotate.limit) {
        Some(n) => corpus.sample(n, seed).map_err(super::corpus_error)?,
        None => corpus.posts().to_vec(),
    };
    let human_sets = load_annotation_sets(&args.human)?;
    let settings = SweepSettings {
        corpus: corpus_path.display().to_string(),
        backend: resolved.clone(),
        template_id: template.template_id.clone(),
        sizes: sizes.clone(),
        limit: args.limit,
        seed,
    };
    let options = RunOptions {
        run_id: format!("sweep-{}", config_hash(&settings)),
        batch_size: sizes[0],
        token_budget: config.annotate.token_budget.unwrap_or(128_000),
        parallelism: config.annotate.parallelism.unwrap_or(4),
        price_per_1000_tokens: config
            .annotate
            .price_per_1000
            .unwrap_or(vlat_core::annotator::DEFAULT_PRICE_PER_1000),
    };
    let backend = build_backend(&resolved)?;
    let mut result = run_sweep(
        &posts,
        &template,
        backend.as_ref(),
        &resolved.to_backend_config(),
        &options,
        &sizes,
        &human_sets,
    )
    .map_err(sweep_error)?;
    let reference = if human_sets.is_empty() {
        None
    } else {
        Some(reference_distribution(&human_sets).map_err(sweep_error)?)
    };
    if let Some(reference) = &reference {
        let chosen = select_batch_size(&mut result, &reference.shares).map_err(sweep_error)?;
        println!("selected batch size {chosen}");
    }
    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    let mut inputs = vec![corpus_path.as_path()];
    inputs.extend(args.human.iter().map(|p| p.as_path()));
    let meta = report_meta(&settings, seed, &inputs)?;
    let report = SweepReport {
        meta: &meta,
        result: &result,
        reference: reference.as_ref(),
    };
    super::write_json(&dir.join("sweep.json"), &report)?;
    let markdown = format!(
        "# Batch-size sweep\n\n{}\n{}",
        meta.to_markdown(),
        sweep_markdown(&result, reference.as_ref())
    );
    super::write_text(&dir.join("sweep.md"), &markdown)?;
    print!("{}", sweep_markdown(&result, reference.as_ref()));
    Ok(())
}
