use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use vlat_core::calibration::reference_distribution;
use vlat_core::metrics::{class_distribution, Distribution, Granularity};
use vlat_core::report::{engagement_markdown, fmt_share, AgreementMatrix, ReportMeta};
use vlat_core::taxonomy::ViolenceClass;
use vlat_core::temporal::{engagement_stats, EngagementStats};

use crate::config::{report_meta, FileConfig};
use crate::{CliError, ReportArgs};

use super::{load_annotation_sets, load_corpus, out_dir, write_json, write_text};

#[derive(Serialize)]
struct ReportSettings {
    annotations: String,
    humans: Vec<String>,
    corpus: Option<String>,
    seed: u64,
}

#[derive(Serialize)]
struct CombinedReport {
    meta: ReportMeta,
    matrix: Option<AgreementMatrix>,
    model_distribution: Distribution,
    reference: Option<Distribution>,
    engagement: Option<EngagementStats>,
}

fn distribution_markdown(
    model_id: &str,
    model: &Distribution,
    reference: Option<&Distribution>,
) -> String {
    let mut out = String::new();
    let _ = write!(out, "| | {model_id} |");
    if reference.is_some() {
        let _ = write!(out, " H-∅ |");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "|---|---|{}", if reference.is_some() { "---|" } else { "" });
    for (idx, class) in ViolenceClass::ALL.iter().enumerate() {
        let _ = write!(out, "| {} | {} |", class.short_name(), fmt_share(model.shares[idx]));
        if let Some(reference) = reference {
            let _ = write!(out, " {} |", fmt_share(reference.shares[idx]));
        }
        let _ = writeln!(out);
    }
    out
}

pub fn run(args: &ReportArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let model_sets = load_annotation_sets(std::slice::from_ref(&args.annotations))?;
    let model = model_sets
        .first()
        .ok_or_else(|| CliError::Usage("annotation file holds no annotations".into()))?;
    let human_sets = load_annotation_sets(&args.human)?;
    let humans: BTreeSet<String> = human_sets
        .iter()
        .map(|s| s.annotator_id().to_string())
        .collect();

    let model_distribution = class_distribution(model, Granularity::Coarse)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let matrix = if human_sets.is_empty() {
        None
    } else {
        let mut all = human_sets.clone();
        all.push(model.clone());
        Some(
            AgreementMatrix::compute(&all, &humans, Granularity::Coarse)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        )
    };
    let reference = if human_sets.is_empty() {
        None
    } else {
        Some(reference_distribution(&human_sets).map_err(|e| CliError::Usage(e.to_string()))?)
    };
    let engagement = match &args.corpus {
        Some(path) => {
            let (corpus, _) = load_corpus(path, config.corpus.format.as_deref())?;
            Some(
                engagement_stats(
                    &corpus,
                    vlat_core::temporal::engagement::DEFAULT_MIN_ACTIVE_SECS,
                )
                .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
        None => None,
    };

    let settings = ReportSettings {
        annotations: args.annotations.display().to_string(),
        humans: args.human.iter().map(|p| p.display().to_string()).collect(),
        corpus: args.corpus.as_ref().map(|p| p.display().to_string()),
        seed,
    };
    let mut inputs = vec![args.annotations.as_path()];
    inputs.extend(args.human.iter().map(|p| p.as_path()));
    if let Some(corpus) = &args.corpus {
        inputs.push(corpus.as_path());
    }
    let meta = report_meta(&settings, seed, &inputs)?;

    let mut markdown = String::new();
    let _ = writeln!(markdown, "# Annotation report\n\n{}", meta.to_markdown());
    if let Some(matrix) = &matrix {
        let _ = writeln!(
            markdown,
            "## Pairwise agreement (kappa/weighted F1/macro F1)\n\n{}",
            matrix.to_markdown()
        );
    }
    let _ = writeln!(markdown, "## Class distribution\n");
    let _ = writeln!(
        markdown,
        "{}",
        distribution_markdown(model.annotator_id(), &model_distribution, reference.as_ref())
    );
    if let Some(engagement) = &engagement {
        let _ = writeln!(markdown, "## Engagement\n\n{}", engagement_markdown(engagement));
    }

    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    write_text(&dir.join("report.md"), &markdown)?;
    let combined = CombinedReport {
        meta,
        matrix,
        model_distribution,
        reference,
        engagement,
    };
    write_json(&dir.join("report.json"), &combined)?;
    print!("{markdown}");
    Ok(())
}
