//! Annotation sets and their file formats.
//!
//! An [`AnnotationSet`] holds one annotator's label per post. Files carry one
//! record per line (JSONL) or row (CSV) with the canonical label code plus
//! the split violence/direction fields; `batch_id` and `ordinal` are present
//! for model runs and absent for human coders.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{parse_label, Annotation, Label, LabelError};

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub annotator_id: String,
    pub violence: String,
    pub direction: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
}

impl AnnotationRecord {
    pub fn from_annotation(a: &Annotation, batch_id: Option<String>, ordinal: Option<u32>) -> Self {
        AnnotationRecord {
            post_id: a.post_id.clone(),
            annotator_id: a.annotator_id.clone(),
            violence: a.label.violence().name().to_string(),
            direction: a.label.direction().name().to_string(),
            code: a.label.code().to_string(),
            reason: a.reason.clone(),
            batch_id,
            ordinal,
        }
    }

    pub fn label(&self) -> Result<Label, LabelError> {
        if !self.code.trim().is_empty() {
            Label::parse_code(&self.code)
        } else {
            parse_label(&self.violence, &self.direction)
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationIoError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate annotation for post {post_id:?} by annotator {annotator_id:?}")]
    Duplicate { post_id: String, annotator_id: String },
}

/// One annotator's labels, keyed by post id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    annotator_id: String,
    labels: BTreeMap<String, Label>,
}

impl AnnotationSet {
    pub fn new(annotator_id: impl Into<String>) -> Self {
        AnnotationSet {
            annotator_id: annotator_id.into(),
            labels: BTreeMap::new(),
        }
    }

    /// Collect annotations into per-annotator sets. A repeated
    /// (post, annotator) pair is an error.
    pub fn group<'a>(
        annotations: impl IntoIterator<Item = &'a Annotation>,
    ) -> Result<Vec<AnnotationSet>, AnnotationIoError> {
        let mut sets: BTreeMap<String, AnnotationSet> = BTreeMap::new();
        for a in annotations {
            let set = sets
                .entry(a.annotator_id.clone())
                .or_insert_with(|| AnnotationSet::new(a.annotator_id.clone()));
            set.insert(a.post_id.clone(), a.label)?;
        }
        Ok(sets.into_values().collect())
    }

    pub fn insert(&mut self, post_id: String, label: Label) -> Result<(), AnnotationIoError> {
        if self.labels.contains_key(&post_id) {
            return Err(AnnotationIoError::Duplicate {
                post_id,
                annotator_id: self.annotator_id.clone(),
            });
        }
        self.labels.insert(post_id, label);
        Ok(())
    }

    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, post_id: &str) -> Option<Label> {
        self.labels.get(post_id).copied()
    }

    /// Post ids in lexicographic order.
    pub fn post_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Write records as JSONL, one per line, in the given order.
pub fn write_records_jsonl(
    path: &Path,
    records: &[AnnotationRecord],
) -> Result<(), AnnotationIoError> {
    let unwritable = |e| AnnotationIoError::Unwritable {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = File::create(path).map_err(unwritable)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization cannot fail");
        writeln!(file, "{line}").map_err(unwritable)?;
    }
    Ok(())
}

/// Read an annotation file (JSONL or CSV by extension) into per-annotator
/// sets. Labels are validated; any bad record is an error, not a skip —
/// annotation files are produced by this toolkit or by curated human coding,
/// so corruption should be loud.
pub fn read_annotation_sets(path: &Path) -> Result<Vec<AnnotationSet>, AnnotationIoError> {
    let records = read_records(path)?;
    let mut sets: BTreeMap<String, AnnotationSet> = BTreeMap::new();
    for (line, record) in records {
        let label = record.label().map_err(|e| AnnotationIoError::Malformed {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        let set = sets
            .entry(record.annotator_id.clone())
            .or_insert_with(|| AnnotationSet::new(record.annotator_id.clone()));
        set.insert(record.post_id, label)?;
    }
    Ok(sets.into_values().collect())
}

fn read_records(path: &Path) -> Result<Vec<(usize, AnnotationRecord)>, AnnotationIoError> {
    let unreadable = |e| AnnotationIoError::Unreadable {
        path: path.display().to_string(),
        source: e,
    };
    let file = File::open(path).map_err(unreadable)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let mut records = Vec::new();
    if is_csv {
        let mut reader = csv::Reader::from_reader(file);
        for (i, result) in reader.deserialize::<AnnotationRecord>().enumerate() {
            let record = result.map_err(|e| AnnotationIoError::Malformed {
                path: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })?;
            records.push((i + 2, record));
        }
    } else {
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(unreadable)?;
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(&line).map_err(|e| AnnotationIoError::Malformed {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push((i + 1, record));
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Directedness, ViolenceClass};

    #[test]
    fn record_round_trips_label() {
        let ann = Annotation {
            post_id: "p1".into(),
            annotator_id: "run-1".into(),
            label: Label::new(ViolenceClass::Explicit, Directedness::General).unwrap(),
            reason: Some("keywords: rope".into()),
        };
        let record = AnnotationRecord::from_annotation(&ann, Some("b0".into()), Some(3));
        assert_eq!(record.code, "EV-G");
        assert_eq!(record.label().unwrap(), ann.label);
    }

    #[test]
    fn record_falls_back_to_split_fields() {
        let record = AnnotationRecord {
            post_id: "p1".into(),
            annotator_id: "human_a".into(),
            violence: "implicit".into(),
            direction: "undirected".into(),
            code: String::new(),
            reason: None,
            batch_id: None,
            ordinal: None,
        };
        let label = record.label().unwrap();
        assert_eq!(label.code(), "IV-G");
    }

    #[test]
    fn group_rejects_duplicates() {
        let a = Annotation {
            post_id: "p1".into(),
            annotator_id: "x".into(),
            label: Label::NON_VIOLENT,
            reason: None,
        };
        assert!(matches!(
            AnnotationSet::group([&a, &a.clone()]),
            Err(AnnotationIoError::Duplicate { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_splits_annotators() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let records = vec![
            AnnotationRecord {
                post_id: "p1".into(),
                annotator_id: "a".into(),
                violence: "non-violent".into(),
                direction: "not-applicable".into(),
                code: "NV".into(),
                reason: None,
                batch_id: None,
                ordinal: None,
            },
            AnnotationRecord {
                post_id: "p1".into(),
                annotator_id: "b".into(),
                violence: "explicit".into(),
                direction: "directed".into(),
                code: "EV-D".into(),
                reason: None,
                batch_id: None,
                ordinal: None,
            },
        ];
        write_records_jsonl(&path, &records).unwrap();
        let sets = read_annotation_sets(&path).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].annotator_id(), "a");
        assert_eq!(sets[1].label("p1").unwrap().code(), "EV-D");
    }

    #[test]
    fn csv_annotations_are_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        std::fs::write(
            &path,
            "post_id,annotator_id,violence,direction,code\n\
             p1,human_a,explicit,general,EV-G\n\
             p2,human_a,non-violent,not-applicable,NV\n",
        )
        .unwrap();
        let sets = read_annotation_sets(&path).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 2);
        assert_eq!(sets[0].label("p1").unwrap().code(), "EV-G");
    }
}
