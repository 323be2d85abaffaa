//! Command implementations.

pub mod agree;
pub mod annotate;
pub mod cost;
pub mod ingest;
pub mod regress;
pub mod report;
pub mod sessions;
pub mod sweep;

use std::path::{Path, PathBuf};

use vlat_core::annotations::{read_annotation_sets, AnnotationIoError, AnnotationSet};
use vlat_core::annotator::{
    builtin_template, Backend, BackendError, MockBackend, MockRules, PromptTemplate,
    RemoteBackend, ReplayBackend, TemplateError,
};
use vlat_core::corpus::{ingest as ingest_corpus, CorpusError, CorpusFormat, IngestStats};
use vlat_core::Corpus;

use crate::config::ResolvedBackend;
use crate::CliError;

pub fn corpus_error(error: CorpusError) -> CliError {
    match error {
        CorpusError::Unreadable { .. } | CorpusError::Unwritable { .. } => {
            CliError::Io(error.to_string())
        }
        CorpusError::SampleTooLarge { .. } | CorpusError::UnknownUser(_) => {
            CliError::Usage(error.to_string())
        }
    }
}

pub fn annotation_io_error(error: AnnotationIoError) -> CliError {
    match error {
        AnnotationIoError::Unreadable { .. } | AnnotationIoError::Unwritable { .. } => {
            CliError::Io(error.to_string())
        }
        _ => CliError::Usage(error.to_string()),
    }
}

pub fn template_error(error: TemplateError) -> CliError {
    match error {
        TemplateError::Unreadable { .. } => CliError::Io(error.to_string()),
        _ => CliError::Usage(error.to_string()),
    }
}

pub fn parse_format(text: Option<&str>, path: &Path) -> Result<CorpusFormat, CliError> {
    match text {
        None => Ok(CorpusFormat::from_path(path)),
        Some("jsonl") => Ok(CorpusFormat::Jsonl),
        Some("csv") => Ok(CorpusFormat::Csv),
        Some(other) => Err(CliError::Usage(format!(
            "unknown corpus format {other:?} (expected jsonl or csv)"
        ))),
    }
}

pub fn load_corpus(
    path: &Path,
    format: Option<&str>,
) -> Result<(Corpus, IngestStats), CliError> {
    let format = parse_format(format, path)?;
    ingest_corpus(path, format).map_err(corpus_error)
}

pub fn load_template(
    path: Option<&Path>,
    builtin: Option<&str>,
) -> Result<PromptTemplate, CliError> {
    match (path, builtin) {
        (Some(path), _) => PromptTemplate::load(path).map_err(template_error),
        (None, Some(id)) => builtin_template(id).map_err(template_error),
        (None, None) => builtin_template("final").map_err(template_error),
    }
}

pub fn build_backend(resolved: &ResolvedBackend) -> Result<Box<dyn Backend>, CliError> {
    match resolved.kind.as_str() {
        "mock" => {
            let rules = match &resolved.mock_rules {
                Some(path) => MockRules::load(path)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
                None => MockRules::default_lexicon(),
            };
            Ok(Box::new(MockBackend::new(rules)))
        }
        "replay" => {
            let path = resolved.fixture.as_ref().ok_or_else(|| {
                CliError::Usage("replay backend needs a fixture file (--fixture)".into())
            })?;
            let backend = ReplayBackend::from_path(path)
                .map_err(|e| CliError::Io(e.to_string()))?;
            Ok(Box::new(backend))
        }
        "remote" => {
            let config = resolved.to_backend_config();
            config
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            match RemoteBackend::new(&config) {
                Ok(backend) => Ok(Box::new(backend)),
                // a missing credential or bad endpoint is a config problem
                Err(BackendError::Auth(m)) | Err(BackendError::MalformedEndpoint(m, _)) => {
                    Err(CliError::Usage(m))
                }
                Err(other) => Err(CliError::Backend(other.to_string())),
            }
        }
        other => Err(CliError::Usage(format!(
            "unknown backend kind {other:?} (expected remote, mock, or replay)"
        ))),
    }
}

pub fn load_annotation_sets(paths: &[PathBuf]) -> Result<Vec<AnnotationSet>, CliError> {
    let mut sets: Vec<AnnotationSet> = Vec::new();
    for path in paths {
        for set in read_annotation_sets(path).map_err(annotation_io_error)? {
            match sets.iter().find(|s| s.annotator_id() == set.annotator_id()) {
                // the same file given twice collapses to one annotator
                Some(existing) if *existing == set => {}
                Some(_) => {
                    return Err(CliError::Usage(format!(
                        "annotator {:?} appears with conflicting labels in more than one file",
                        set.annotator_id()
                    )))
                }
                None => sets.push(set),
            }
        }
    }
    Ok(sets)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let rendered = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize {}: {e}", path.display())))?;
    write_text(path, &format!("{rendered}\n"))
}

pub fn out_dir(out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&dir)?;
    Ok(dir)
}
