//! Binned share-over-time series for annotated corpora under three scopes:
//! forum calendar time, per-user relative time, and fixed windows following
//! a period of inactivity.

use std::collections::BTreeMap;

use serde::Serialize;

use super::session::SessionConfig;
use super::TemporalError;
use crate::annotations::AnnotationSet;
use crate::corpus::Corpus;
use crate::taxonomy::{Directedness, Label, ViolenceClass};

/// Julian year; slopes for calendar and user-journey scopes are per year.
pub const SECONDS_PER_YEAR: f64 = 31_557_600.0;

const DEFAULT_BIN_COUNT: i64 = 50;

/// What elapsed time means for a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scope {
    /// Time since the forum's first annotated post; unit is years.
    ForumCalendar,
    /// Time since each user's own first annotated post, pooled; unit is years.
    UserRelative,
    /// For each user, a window of this many seconds starting at the first
    /// post after an inactivity gap of at least the same length; unit is the
    /// window fraction in [0, 1).
    PostInactivity { window_secs: i64 },
}

impl Scope {
    pub fn unit_name(self) -> &'static str {
        match self {
            Scope::ForumCalendar | Scope::UserRelative => "year",
            Scope::PostInactivity { .. } => "window",
        }
    }

    pub fn unit_seconds(self) -> f64 {
        match self {
            Scope::ForumCalendar | Scope::UserRelative => SECONDS_PER_YEAR,
            Scope::PostInactivity { window_secs } => window_secs as f64,
        }
    }
}

/// The share being tracked: a violence class, the combined violent share, or
/// one directedness class (always as a share of all posts in the bin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Combined,
    Explicit,
    Implicit,
    NonViolent,
    Directed,
    General,
    SelfDirected,
}

impl Category {
    pub const VIOLENCE_SET: [Category; 4] = [
        Category::Combined,
        Category::Explicit,
        Category::Implicit,
        Category::NonViolent,
    ];

    pub const DIRECTION_SET: [Category; 3] =
        [Category::Directed, Category::General, Category::SelfDirected];

    pub fn name(self) -> &'static str {
        match self {
            Category::Combined => "combined",
            Category::Explicit => "explicit",
            Category::Implicit => "implicit",
            Category::NonViolent => "non-violent",
            Category::Directed => "directed",
            Category::General => "general",
            Category::SelfDirected => "self-directed",
        }
    }

    pub fn parse(text: &str) -> Option<Category> {
        let all = [
            Category::Combined,
            Category::Explicit,
            Category::Implicit,
            Category::NonViolent,
            Category::Directed,
            Category::General,
            Category::SelfDirected,
        ];
        all.into_iter().find(|c| c.name() == text.trim())
    }

    pub fn matches(self, label: Label) -> bool {
        match self {
            Category::Combined => label.is_violent(),
            Category::Explicit => label.violence() == ViolenceClass::Explicit,
            Category::Implicit => label.violence() == ViolenceClass::Implicit,
            Category::NonViolent => label.violence() == ViolenceClass::NonViolent,
            Category::Directed => label.direction() == Directedness::Directed,
            Category::General => label.direction() == Directedness::General,
            Category::SelfDirected => label.direction() == Directedness::SelfDirected,
        }
    }
}

/// One populated time bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    /// Bin start, in the scope's time unit (years or window fraction).
    pub elapsed: f64,
    pub share: f64,
    pub n_posts: u64,
}

/// Share-over-time series; only populated bins are kept, in time order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedSeries {
    pub category: Category,
    pub time_unit: String,
    /// Seconds per unit of `elapsed`.
    pub unit_seconds: f64,
    pub bin_width_secs: i64,
    pub bins: Vec<Bin>,
}

impl BinnedSeries {
    /// Assemble from externally computed bins (e.g. a series file), with
    /// elapsed values taken as-is (unit seconds 1).
    pub fn from_bins(category: Category, bins: Vec<Bin>) -> BinnedSeries {
        BinnedSeries {
            category,
            time_unit: "given".into(),
            unit_seconds: 1.0,
            bin_width_secs: 0,
            bins,
        }
    }

    pub fn total_posts(&self) -> u64 {
        self.bins.iter().map(|b| b.n_posts).sum()
    }
}

/// Gather (elapsed seconds, label) events for the scope. Only posts present
/// in the annotation set participate.
fn scope_events(
    corpus: &Corpus,
    labels: &AnnotationSet,
    scope: Scope,
) -> Result<Vec<(i64, Label)>, TemporalError> {
    let mut per_user: BTreeMap<&str, Vec<(i64, Label)>> = BTreeMap::new();
    for post in corpus.posts() {
        if let Some(label) = labels.label(&post.post_id) {
            per_user
                .entry(post.user_id.as_str())
                .or_default()
                .push((post.created_at, label));
        }
    }
    for posts in per_user.values_mut() {
        posts.sort_by_key(|(t, _)| *t);
    }
    let mut events = Vec::new();
    match scope {
        Scope::ForumCalendar => {
            let origin = per_user
                .values()
                .filter_map(|posts| posts.first().map(|(t, _)| *t))
                .min()
                .ok_or(TemporalError::NoAnnotatedPosts)?;
            for posts in per_user.values() {
                for (t, label) in posts {
                    events.push((t - origin, *label));
                }
            }
        }
        Scope::UserRelative => {
            for posts in per_user.values() {
                let origin = posts[0].0;
                for (t, label) in posts {
                    events.push((t - origin, *label));
                }
            }
        }
        Scope::PostInactivity { window_secs } => {
            for posts in per_user.values() {
                let mut i = 1;
                while i < posts.len() {
                    if posts[i].0 - posts[i - 1].0 >= window_secs {
                        let origin = posts[i].0;
                        let mut j = i;
                        while j < posts.len() && posts[j].0 - origin < window_secs {
                            events.push((posts[j].0 - origin, posts[j].1));
                            j += 1;
                        }
                        i = j.max(i + 1);
                    } else {
                        i += 1;
                    }
                }
            }
        }
    }
    if events.is_empty() {
        return Err(TemporalError::NoAnnotatedPosts);
    }
    events.sort_by_key(|(t, _)| *t);
    Ok(events)
}

/// Bin the scope's posts by elapsed time and report the share of posts in
/// `category` per bin (over all posts in the bin).
pub fn violent_share_series(
    corpus: &Corpus,
    labels: &AnnotationSet,
    config: &SessionConfig,
    scope: Scope,
    category: Category,
) -> Result<BinnedSeries, TemporalError> {
    let events = scope_events(corpus, labels, scope)?;
    let span = match scope {
        Scope::PostInactivity { window_secs } => window_secs,
        _ => events.last().map(|(t, _)| *t).unwrap_or(0),
    };
    let bin_width = config
        .bin_width_secs
        .unwrap_or_else(|| (span / DEFAULT_BIN_COUNT).max(1));
    let mut totals: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for (elapsed, label) in &events {
        let bin = elapsed / bin_width;
        let entry = totals.entry(bin).or_default();
        entry.0 += 1;
        if category.matches(*label) {
            entry.1 += 1;
        }
    }
    let unit_seconds = scope.unit_seconds();
    let bins = totals
        .into_iter()
        .map(|(bin, (n, hits))| Bin {
            elapsed: (bin * bin_width) as f64 / unit_seconds,
            share: hits as f64 / n as f64,
            n_posts: n,
        })
        .collect();
    Ok(BinnedSeries {
        category,
        time_unit: scope.unit_name().into(),
        unit_seconds,
        bin_width_secs: bin_width,
        bins,
    })
}

/// The three directedness series (shares over all posts, so they sum to the
/// combined violent share bin by bin).
pub fn directedness_series(
    corpus: &Corpus,
    labels: &AnnotationSet,
    config: &SessionConfig,
    scope: Scope,
) -> Result<Vec<BinnedSeries>, TemporalError> {
    Category::DIRECTION_SET
        .iter()
        .map(|&category| violent_share_series(corpus, labels, config, scope, category))
        .collect()
}
