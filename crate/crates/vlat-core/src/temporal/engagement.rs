//! Per-user engagement statistics: post-count spread and long-term activity.

use serde::Serialize;

use super::TemporalError;
use crate::corpus::Corpus;

/// Default bar for "sustained" activity: 2.5 years.
pub const DEFAULT_MIN_ACTIVE_SECS: i64 = (2.5 * 365.25 * 86_400.0) as i64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngagementStats {
    pub users: usize,
    pub mean_posts: f64,
    pub median_posts: f64,
    pub single_post_share: f64,
    /// 90th-percentile post count (nearest rank): the most active 10% of
    /// users posted at least this often.
    pub p90_posts: u64,
    pub min_active_secs: i64,
    /// Share of users whose first-to-last post span reaches `min_active_secs`.
    pub active_at_least_share: f64,
}

pub fn engagement_stats(
    corpus: &Corpus,
    min_active_secs: i64,
) -> Result<EngagementStats, TemporalError> {
    if corpus.is_empty() {
        return Err(TemporalError::EmptyCorpus);
    }
    let mut counts: Vec<u64> = Vec::new();
    let mut long_active = 0usize;
    for user in corpus.user_ids().map(str::to_string).collect::<Vec<_>>() {
        let timeline = corpus.timeline(&user).expect("user ids come from the corpus");
        counts.push(timeline.posts.len() as u64);
        let span = timeline.posts.last().map(|p| p.created_at).unwrap_or(0)
            - timeline.posts.first().map(|p| p.created_at).unwrap_or(0);
        if span >= min_active_secs {
            long_active += 1;
        }
    }
    counts.sort_unstable();
    let users = counts.len();
    let mean_posts = counts.iter().sum::<u64>() as f64 / users as f64;
    let median_posts = if users % 2 == 1 {
        counts[users / 2] as f64
    } else {
        (counts[users / 2 - 1] + counts[users / 2]) as f64 / 2.0
    };
    let single_post_share =
        counts.iter().filter(|&&c| c == 1).count() as f64 / users as f64;
    let p90_index = ((0.9 * users as f64).ceil() as usize).max(1) - 1;
    Ok(EngagementStats {
        users,
        mean_posts,
        median_posts,
        single_post_share,
        p90_posts: counts[p90_index],
        min_active_secs,
        active_at_least_share: long_active as f64 / users as f64,
    })
}
