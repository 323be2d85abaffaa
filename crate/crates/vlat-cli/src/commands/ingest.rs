use serde::Serialize;

use crate::config::{file_digest, FileConfig};
use crate::{CliError, IngestArgs};

use super::{load_corpus, out_dir, write_json};

#[derive(Serialize)]
struct IngestReport {
    input: String,
    input_digest: String,
    tool_version: String,
    stats: vlat_core::corpus::IngestStats,
}

pub fn run(args: &IngestArgs, config: &FileConfig) -> Result<(), CliError> {
    let format = args
        .format
        .as_deref()
        .or(config.corpus.format.as_deref());
    let (corpus, stats) = load_corpus(&args.input, format)?;
    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    corpus
        .export_jsonl(&dir.join("corpus.jsonl"))
        .map_err(super::corpus_error)?;
    let report = IngestReport {
        input: args.input.display().to_string(),
        input_digest: file_digest(&args.input)?,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        stats: stats.clone(),
    };
    write_json(&dir.join("ingest.json"), &report)?;
    println!(
        "{} posts from {} users, {} skipped ({} malformed, {} missing fields, {} bad \
         timestamps, {} duplicate ids)",
        corpus.len(),
        corpus.user_count(),
        stats.warnings(),
        stats.skipped_malformed,
        stats.skipped_missing_field,
        stats.skipped_bad_timestamp,
        stats.duplicate_ids,
    );
    Ok(())
}
