//! Corpus ingestion, normalization, storage, deterministic sampling, and
//! per-user timelines.
//!
//! Input records come from JSONL or CSV files with the columns
//! `post_id, user_id, thread_id, created_at, text`. Timestamps are accepted
//! as integer epoch seconds (UTC) or RFC 3339 strings and stored at second
//! resolution. A built [`Corpus`] is immutable and safe to share across
//! threads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::DateTime;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One forum message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub thread_id: String,
    /// Epoch seconds, UTC.
    pub created_at: i64,
    /// Normalized via [`preprocess`].
    pub text: String,
}

/// All posts of one user, sorted ascending by `(created_at, post_id)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTimeline {
    pub user_id: String,
    pub posts: Vec<Post>,
}

/// Input file format for [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess the format from a file extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Per-record problems encountered during ingestion. Records with problems
/// are skipped and counted, never silently dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub records_read: usize,
    pub kept: usize,
    pub skipped_malformed: usize,
    pub skipped_missing_field: usize,
    pub skipped_bad_timestamp: usize,
    pub duplicate_ids: usize,
}

impl IngestStats {
    pub fn warnings(&self) -> usize {
        self.skipped_malformed
            + self.skipped_missing_field
            + self.skipped_bad_timestamp
            + self.duplicate_ids
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
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
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unknown user {0:?}")]
    UnknownUser(String),
}

/// Immutable post store with a per-user index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    by_id: BTreeMap<String, usize>,
    by_user: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Posts in ingestion order.
    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn get(&self, post_id: &str) -> Option<&Post> {
        self.by_id.get(post_id).map(|&i| &self.posts[i])
    }

    /// User ids in lexicographic order.
    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.by_user.keys().map(|s| s.as_str())
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    /// This user's posts sorted by `(created_at, post_id)`.
    pub fn timeline(&self, user_id: &str) -> Result<UserTimeline, CorpusError> {
        let indices = self
            .by_user
            .get(user_id)
            .ok_or_else(|| CorpusError::UnknownUser(user_id.to_string()))?;
        let mut posts: Vec<Post> = indices.iter().map(|&i| self.posts[i].clone()).collect();
        posts.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.post_id.cmp(&b.post_id))
        });
        Ok(UserTimeline {
            user_id: user_id.to_string(),
            posts,
        })
    }

    /// Uniform sample of `n` posts without replacement. Deterministic for a
    /// fixed seed, independent of platform.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Post>, CorpusError> {
        if n > self.posts.len() {
            return Err(CorpusError::SampleTooLarge {
                requested: n,
                available: self.posts.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..self.posts.len()).collect();
        // partial Fisher-Yates: the first n slots are the sample
        for i in 0..n {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        Ok(indices[..n].iter().map(|&i| self.posts[i].clone()).collect())
    }

    /// Serialize every post as one JSON object per line, in ingestion order.
    pub fn export_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut file = File::create(path).map_err(|e| CorpusError::Unwritable {
            path: path.display().to_string(),
            source: e,
        })?;
        for post in &self.posts {
            let line = serde_json::to_string(post).expect("post serialization cannot fail");
            writeln!(file, "{line}").map_err(|e| CorpusError::Unwritable {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }
}

/// Accumulates posts into a [`Corpus`]; single-writer by construction.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    corpus: Corpus,
    stats: IngestStats,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one post, normalizing its text. Duplicate post ids keep the first
    /// occurrence and count a warning.
    pub fn push(&mut self, mut post: Post) {
        self.stats.records_read += 1;
        if self.corpus.by_id.contains_key(&post.post_id) {
            self.stats.duplicate_ids += 1;
            return;
        }
        post.text = preprocess(&post.text);
        let idx = self.corpus.posts.len();
        self.corpus.by_id.insert(post.post_id.clone(), idx);
        self.corpus
            .by_user
            .entry(post.user_id.clone())
            .or_default()
            .push(idx);
        self.corpus.posts.push(post);
        self.stats.kept += 1;
    }

    pub fn finish(self) -> (Corpus, IngestStats) {
        (self.corpus, self.stats)
    }
}

/// Collapse newline runs: CRLF and bare CR become LF, then every maximal run
/// of two or more LFs becomes a single LF. No other characters are altered.
/// Idempotent.
pub fn preprocess(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_newline = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let is_newline = match c {
            '\n' => true,
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                true
            }
            _ => false,
        };
        if is_newline {
            pending_newline = true;
        } else {
            if pending_newline {
                out.push('\n');
                pending_newline = false;
            }
            out.push(c);
        }
    }
    if pending_newline {
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct RawRecord {
    post_id: Option<String>,
    user_id: Option<String>,
    thread_id: Option<String>,
    created_at: Option<serde_json::Value>,
    text: Option<String>,
}

enum RecordIssue {
    MissingField,
    BadTimestamp,
}

fn build_post(raw: RawRecord) -> Result<Post, RecordIssue> {
    let post_id = raw.post_id.filter(|s| !s.is_empty());
    let user_id = raw.user_id.filter(|s| !s.is_empty());
    let thread_id = raw.thread_id.filter(|s| !s.is_empty());
    let (post_id, user_id, thread_id, text, created_at) =
        match (post_id, user_id, thread_id, raw.text, raw.created_at) {
            (Some(p), Some(u), Some(t), Some(x), Some(c)) => (p, u, t, x, c),
            _ => return Err(RecordIssue::MissingField),
        };
    let created_at = parse_timestamp(&created_at).ok_or(RecordIssue::BadTimestamp)?;
    Ok(Post {
        post_id,
        user_id,
        thread_id,
        created_at,
        text,
    })
}

/// Epoch seconds from either a JSON integer or an RFC 3339 string
/// (sub-second precision is floored away).
fn parse_timestamp(value: &serde_json::Value) -> Option<i64> {
    match value {
        serde_json::Value::Number(n) => n.as_i64(),
        serde_json::Value::String(s) => {
            let s = s.trim();
            if let Ok(n) = s.parse::<i64>() {
                return Some(n);
            }
            DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
        }
        _ => None,
    }
}

/// Read every well-formed record from `path` into a [`Corpus`].
///
/// Records missing a required field or carrying an unparseable timestamp are
/// skipped and counted in [`IngestStats`]; an unreadable file is an error.
pub fn ingest(path: &Path, format: CorpusFormat) -> Result<(Corpus, IngestStats), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Unreadable {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut builder = CorpusBuilder::new();
    match format {
        CorpusFormat::Jsonl => {
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| CorpusError::Unreadable {
                    path: path.display().to_string(),
                    source: e,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RawRecord>(&line) {
                    Ok(raw) => ingest_record(&mut builder, raw),
                    Err(_) => {
                        builder.stats.records_read += 1;
                        builder.stats.skipped_malformed += 1;
                    }
                }
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            for result in reader.deserialize::<BTreeMap<String, String>>() {
                match result {
                    Ok(row) => {
                        let raw = RawRecord {
                            post_id: row.get("post_id").cloned(),
                            user_id: row.get("user_id").cloned(),
                            thread_id: row.get("thread_id").cloned(),
                            created_at: row
                                .get("created_at")
                                .map(|s| serde_json::Value::String(s.clone())),
                            text: row.get("text").cloned(),
                        };
                        ingest_record(&mut builder, raw);
                    }
                    Err(_) => {
                        builder.stats.records_read += 1;
                        builder.stats.skipped_malformed += 1;
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

fn ingest_record(builder: &mut CorpusBuilder, raw: RawRecord) {
    match build_post(raw) {
        Ok(post) => builder.push(post),
        Err(RecordIssue::MissingField) => {
            builder.stats.records_read += 1;
            builder.stats.skipped_missing_field += 1;
        }
        Err(RecordIssue::BadTimestamp) => {
            builder.stats.records_read += 1;
            builder.stats.skipped_bad_timestamp += 1;
        }
    }
}
