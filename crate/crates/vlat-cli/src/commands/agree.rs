use std::collections::BTreeSet;

use serde::Serialize;

use vlat_core::metrics::{Granularity, MetricsError};
use vlat_core::report::{AgreementMatrix, ReportMeta};

use crate::config::{report_meta, FileConfig};
use crate::{AgreeArgs, CliError};

use super::{load_annotation_sets, out_dir, write_json, write_text};

#[derive(Serialize)]
struct AgreeSettings {
    annotations: Vec<String>,
    humans: Vec<String>,
    granularity: String,
    seed: u64,
}

#[derive(Serialize)]
struct AgreeReport<'a> {
    meta: &'a ReportMeta,
    matrix: &'a AgreementMatrix,
}

pub fn run(args: &AgreeArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let granularity = match args.granularity.as_str() {
        "coarse" => Granularity::Coarse,
        "full" => Granularity::Full,
        other => {
            return Err(CliError::Usage(format!(
                "unknown granularity {other:?} (expected coarse or full)"
            )))
        }
    };
    let sets = load_annotation_sets(&args.annotations)?;
    if sets.is_empty() {
        return Err(CliError::Usage("no annotators found in the inputs".into()));
    }
    let humans: BTreeSet<String> = args.human.iter().cloned().collect();
    for human in &humans {
        if !sets.iter().any(|s| s.annotator_id() == human) {
            return Err(CliError::Usage(format!(
                "--human {human:?} does not match any annotator in the inputs"
            )));
        }
    }
    let matrix = AgreementMatrix::compute(&sets, &humans, granularity).map_err(|e| match e {
        MetricsError::EmptyIntersection => CliError::Usage(
            "two annotators share no post ids; agreement is undefined for that pair".into(),
        ),
        other => CliError::Usage(other.to_string()),
    })?;
    let settings = AgreeSettings {
        annotations: args
            .annotations
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        humans: humans.iter().cloned().collect(),
        granularity: args.granularity.clone(),
        seed,
    };
    let inputs: Vec<&std::path::Path> = args.annotations.iter().map(|p| p.as_path()).collect();
    let meta = report_meta(&settings, seed, &inputs)?;
    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    write_json(&dir.join("agreement.json"), &AgreeReport { meta: &meta, matrix: &matrix })?;
    let markdown = format!(
        "# Pairwise agreement (kappa/weighted F1/macro F1)\n\n{}\n{}",
        meta.to_markdown(),
        matrix.to_markdown()
    );
    write_text(&dir.join("agreement.md"), &markdown)?;
    print!("{}", matrix.to_markdown());
    Ok(())
}
