//! Parsing backend responses back into per-post annotations, with strict
//! ordinal alignment: a response must cover each of the batch's ordinals
//! exactly once or the whole batch is rejected for re-submission.

use std::collections::BTreeMap;

use thiserror::Error;

use super::batch::BatchRequest;
use super::template::ResponseMode;
use crate::taxonomy::{parse_label, Annotation, Label};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("response is not a JSON object: {0}")]
    NotAnObject(String),
    #[error("unrecognized response key {0:?}")]
    UnknownKey(String),
    #[error("missing ordinal {0}")]
    MissingOrdinal(u32),
    #[error("duplicate ordinal {0}")]
    DuplicateOrdinal(u32),
    #[error("unexpected extra ordinal {0}")]
    ExtraOrdinal(u32),
    #[error("ordinal {ordinal}: bad label: {message}")]
    BadLabel { ordinal: u32, message: String },
    #[error("no parseable `Post <n>:` lines in plain response")]
    NoPlainLines,
}

/// Parse a raw completion for `batch` into one annotation per post.
///
/// Structured mode expects a single JSON object mapping each ordinal to
/// `{reason?, violence, direction?}`; keys may be numbers, numeric strings,
/// `Post <n>` echoes, or (as a fallback) the post text itself. Plain mode
/// expects one `Post <n>: <violence>[, <direction>][ — <reason>]` line per
/// post. Any missing, duplicate, or extra ordinal fails the whole batch.
pub fn parse_response(
    raw: &str,
    batch: &BatchRequest,
    mode: ResponseMode,
    annotator_id: &str,
) -> Result<Vec<Annotation>, ParseError> {
    let entries = match mode {
        ResponseMode::StructuredObject => parse_structured(raw, batch)?,
        ResponseMode::Plain => parse_plain(raw)?,
    };
    align(entries, batch, annotator_id)
}

struct Entry {
    ordinal: u32,
    label: Label,
    reason: Option<String>,
}

fn align(
    entries: Vec<Entry>,
    batch: &BatchRequest,
    annotator_id: &str,
) -> Result<Vec<Annotation>, ParseError> {
    let n = batch.posts.len() as u32;
    let mut by_ordinal: BTreeMap<u32, Entry> = BTreeMap::new();
    for entry in entries {
        if entry.ordinal == 0 || entry.ordinal > n {
            return Err(ParseError::ExtraOrdinal(entry.ordinal));
        }
        let ordinal = entry.ordinal;
        if by_ordinal.insert(ordinal, entry).is_some() {
            return Err(ParseError::DuplicateOrdinal(ordinal));
        }
    }
    for ordinal in 1..=n {
        if !by_ordinal.contains_key(&ordinal) {
            return Err(ParseError::MissingOrdinal(ordinal));
        }
    }
    Ok(batch
        .posts
        .iter()
        .map(|post| {
            let entry = &by_ordinal[&post.ordinal];
            Annotation {
                post_id: post.post_id.clone(),
                annotator_id: annotator_id.to_string(),
                label: entry.label,
                reason: entry.reason.clone(),
            }
        })
        .collect())
}

fn parse_structured(raw: &str, batch: &BatchRequest) -> Result<Vec<Entry>, ParseError> {
    let cleaned = strip_code_fence(raw.trim());
    let value: serde_json::Value = serde_json::from_str(cleaned)
        .map_err(|e| ParseError::NotAnObject(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| ParseError::NotAnObject("top-level value is not an object".into()))?;
    let mut entries = Vec::new();
    for (key, fields) in object {
        let ordinal = resolve_key(key, batch).ok_or_else(|| ParseError::UnknownKey(key.clone()))?;
        let fields = fields
            .as_object()
            .ok_or_else(|| ParseError::BadLabel {
                ordinal,
                message: "entry is not an object".into(),
            })?;
        let violence = fields
            .get("violence")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ParseError::BadLabel {
                ordinal,
                message: "missing violence field".into(),
            })?;
        let direction = fields.get("direction").and_then(|v| v.as_str()).unwrap_or("");
        let label = parse_label(violence, direction).map_err(|e| ParseError::BadLabel {
            ordinal,
            message: e.to_string(),
        })?;
        let reason = fields
            .get("reason")
            .and_then(|v| v.as_str())
            .map(|s| s.to_string());
        entries.push(Entry {
            ordinal,
            label,
            reason,
        });
    }
    Ok(entries)
}

/// Map a structured-response key to an ordinal: a number, a numeric string,
/// a `Post <n>` echo, or — as a fallback — the post's own text.
fn resolve_key(key: &str, batch: &BatchRequest) -> Option<u32> {
    let trimmed = key.trim();
    if let Ok(n) = trimmed.parse::<u32>() {
        return Some(n);
    }
    let lowered = trimmed.to_lowercase();
    if let Some(rest) = lowered.strip_prefix("post") {
        if let Ok(n) = rest.trim().trim_end_matches(':').parse::<u32>() {
            return Some(n);
        }
    }
    batch
        .posts
        .iter()
        .find(|p| p.text == trimmed)
        .map(|p| p.ordinal)
}

fn strip_code_fence(raw: &str) -> &str {
    let Some(body) = raw.strip_prefix("```") else {
        return raw;
    };
    let body = body.strip_prefix("json").unwrap_or(body);
    body.trim_start_matches('\n')
        .strip_suffix("```")
        .map(str::trim_end)
        .unwrap_or(raw)
}

fn parse_plain(raw: &str) -> Result<Vec<Entry>, ParseError> {
    let line_re = regex::Regex::new(r"^Post\s+(\d+)\s*:\s*(.*)$").unwrap();
    let mut entries = Vec::new();
    for line in raw.lines() {
        let Some(captures) = line_re.captures(line.trim()) else {
            continue; // chatter around the answer lines is tolerated
        };
        let ordinal: u32 = captures[1].parse().map_err(|_| ParseError::NoPlainLines)?;
        let rest = captures[2].trim();
        let (labels, reason) = match rest.split_once('—') {
            Some((l, r)) => (l.trim(), Some(r.trim().to_string())),
            None => (rest, None),
        };
        let (violence, direction) = match labels.split_once(',') {
            Some((v, d)) => (v.trim(), d.trim()),
            None => (labels, ""),
        };
        let label = parse_label(violence, direction).map_err(|e| ParseError::BadLabel {
            ordinal,
            message: e.to_string(),
        })?;
        entries.push(Entry {
            ordinal,
            label,
            reason,
        });
    }
    if entries.is_empty() {
        return Err(ParseError::NoPlainLines);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::batch::BatchRequest;
    use crate::annotator::template::builtin_template;
    use crate::corpus::Post;

    fn batch_of(n: usize) -> BatchRequest {
        let template = builtin_template("baseline").unwrap();
        let posts: Vec<Post> = (0..n)
            .map(|i| Post {
                post_id: format!("p{i}"),
                user_id: "u".into(),
                thread_id: "t".into(),
                created_at: i as i64,
                text: format!("text number {i}"),
            })
            .collect();
        BatchRequest::new("b0000", &template, &posts)
    }

    #[test]
    fn structured_single_post() {
        let batch = batch_of(1);
        let raw = r#"{"1": {"violence": "non-violent"}}"#;
        let annotations =
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap();
        assert_eq!(annotations.len(), 1);
        assert_eq!(annotations[0].label.code(), "NV");
        assert_eq!(annotations[0].post_id, "p0");
    }

    #[test]
    fn structured_missing_ordinal_is_named() {
        let batch = batch_of(3);
        let raw = r#"{"1": {"violence": "non-violent"}, "2": {"violence": "non-violent"}}"#;
        let err = parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap_err();
        assert_eq!(err, ParseError::MissingOrdinal(3));
    }

    #[test]
    fn structured_extra_ordinal_rejected() {
        let batch = batch_of(1);
        let raw = r#"{"1": {"violence": "non-violent"}, "2": {"violence": "non-violent"}}"#;
        let err = parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap_err();
        assert_eq!(err, ParseError::ExtraOrdinal(2));
    }

    #[test]
    fn structured_reason_kept_verbatim() {
        let batch = batch_of(1);
        let raw = r#"{"1": {"reason": "most important words: 'rope', 'deserve'", "violence": "explicit", "direction": "general"}}"#;
        let annotations =
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap();
        assert_eq!(
            annotations[0].reason.as_deref(),
            Some("most important words: 'rope', 'deserve'")
        );
    }

    #[test]
    fn structured_accepts_code_fences_and_post_keys() {
        let batch = batch_of(2);
        let raw = "```json\n{\"Post 1\": {\"violence\": \"implicit\", \"direction\": \"general\"}, \"Post 2\": {\"violence\": \"non-violent\"}}\n```";
        let annotations =
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap();
        assert_eq!(annotations[0].label.code(), "IV-G");
    }

    #[test]
    fn structured_accepts_text_echo_keys() {
        let batch = batch_of(1);
        let raw = r#"{"text number 0": {"violence": "non-violent"}}"#;
        let annotations =
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap();
        assert_eq!(annotations[0].post_id, "p0");
    }

    #[test]
    fn structured_bad_label_fails_batch() {
        let batch = batch_of(1);
        let raw = r#"{"1": {"violence": "extremely"}}"#;
        assert!(matches!(
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run"),
            Err(ParseError::BadLabel { ordinal: 1, .. })
        ));
        // a violent class without a direction is also a bad label
        let raw = r#"{"1": {"violence": "explicit"}}"#;
        assert!(parse_response(raw, &batch, ResponseMode::StructuredObject, "run").is_err());
    }

    #[test]
    fn plain_lines_parse() {
        let batch = batch_of(2);
        let raw = "Here you go:\nPost 1: explicit, directed — threat wording\nPost 2: non-violent — nothing here";
        let annotations = parse_response(raw, &batch, ResponseMode::Plain, "run").unwrap();
        assert_eq!(annotations[0].label.code(), "EV-D");
        assert_eq!(annotations[1].label.code(), "NV");
        assert_eq!(annotations[0].reason.as_deref(), Some("threat wording"));
    }

    #[test]
    fn plain_duplicate_ordinal_rejected() {
        let batch = batch_of(2);
        let raw = "Post 1: non-violent\nPost 1: non-violent\nPost 2: non-violent";
        let err = parse_response(raw, &batch, ResponseMode::Plain, "run").unwrap_err();
        assert_eq!(err, ParseError::DuplicateOrdinal(1));
    }

    #[test]
    fn plain_without_lines_rejected() {
        let batch = batch_of(1);
        assert_eq!(
            parse_response("no answer", &batch, ResponseMode::Plain, "run").unwrap_err(),
            ParseError::NoPlainLines
        );
    }

    #[test]
    fn annotations_follow_batch_order() {
        let batch = batch_of(3);
        // response lists ordinals out of order; output must follow the batch
        let raw = r#"{"3": {"violence": "non-violent"}, "1": {"violence": "non-violent"}, "2": {"violence": "explicit", "direction": "self-directed"}}"#;
        let annotations =
            parse_response(raw, &batch, ResponseMode::StructuredObject, "run").unwrap();
        let ids: Vec<&str> = annotations.iter().map(|a| a.post_id.as_str()).collect();
        assert_eq!(ids, vec!["p0", "p1", "p2"]);
        assert_eq!(annotations[1].label.code(), "EV-S");
    }
}
