//! Session segmentation: a user's posts belong to one session while
//! consecutive gaps stay strictly below the inactivity threshold; a gap of
//! exactly the threshold already starts a new session.

use serde::Serialize;

use super::TemporalError;
use crate::corpus::{Post, UserTimeline};

/// The thresholds studied by default: one hour up to 180 days.
pub const STANDARD_THRESHOLDS: [(&str, i64); 6] = [
    ("1h", 3_600),
    ("6h", 21_600),
    ("12h", 43_200),
    ("24h", 86_400),
    ("14d", 1_209_600),
    ("180d", 15_552_000),
];

/// Inactivity threshold plus the bin width used when aggregating series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SessionConfig {
    pub inactivity_threshold_secs: i64,
    /// `None` means 1/50 of the observed span.
    pub bin_width_secs: Option<i64>,
}

impl SessionConfig {
    pub fn new(inactivity_threshold_secs: i64) -> Result<SessionConfig, TemporalError> {
        if inactivity_threshold_secs <= 0 {
            return Err(TemporalError::NonPositiveDuration);
        }
        Ok(SessionConfig {
            inactivity_threshold_secs,
            bin_width_secs: None,
        })
    }

    pub fn with_bin_width(mut self, bin_width_secs: i64) -> Result<SessionConfig, TemporalError> {
        if bin_width_secs <= 0 {
            return Err(TemporalError::NonPositiveDuration);
        }
        self.bin_width_secs = Some(bin_width_secs);
        Ok(self)
    }
}

/// Parse `"90s"`, `"30m"`, `"12h"`, `"14d"`, or bare seconds.
pub fn parse_duration(text: &str) -> Result<i64, TemporalError> {
    let trimmed = text.trim();
    let bad = || TemporalError::BadDuration(text.to_string());
    let (number, unit) = match trimmed.find(|c: char| !c.is_ascii_digit()) {
        Some(split) => trimmed.split_at(split),
        None => (trimmed, "s"),
    };
    let value: i64 = number.parse().map_err(|_| bad())?;
    let seconds = match unit.trim() {
        "s" | "" => value,
        "m" => value * 60,
        "h" => value * 3_600,
        "d" => value * 86_400,
        _ => return Err(bad()),
    };
    if seconds <= 0 {
        return Err(TemporalError::NonPositiveDuration);
    }
    Ok(seconds)
}

/// A maximal run of one user's posts with every internal gap below the
/// threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub posts: Vec<Post>,
    pub start: i64,
    pub end: i64,
}

impl Session {
    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn duration_secs(&self) -> i64 {
        self.end - self.start
    }
}

/// Split a timeline into sessions. Posts are consumed in timeline order
/// (already sorted); an empty timeline yields no sessions.
pub fn segment(timeline: &UserTimeline, config: &SessionConfig) -> Vec<Session> {
    let threshold = config.inactivity_threshold_secs;
    let mut sessions = Vec::new();
    let mut current: Vec<Post> = Vec::new();
    for post in &timeline.posts {
        if let Some(last) = current.last() {
            if post.created_at - last.created_at >= threshold {
                sessions.push(close_session(&timeline.user_id, std::mem::take(&mut current)));
            }
        }
        current.push(post.clone());
    }
    if !current.is_empty() {
        sessions.push(close_session(&timeline.user_id, current));
    }
    sessions
}

fn close_session(user_id: &str, posts: Vec<Post>) -> Session {
    let start = posts.first().map(|p| p.created_at).unwrap_or(0);
    let end = posts.last().map(|p| p.created_at).unwrap_or(0);
    Session {
        user_id: user_id.to_string(),
        posts,
        start,
        end,
    }
}
