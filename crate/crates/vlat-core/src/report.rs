//! Report assembly: the pairwise agreement matrix, the batch-size
//! distribution table, regression tables, and engagement summaries, each as
//! Markdown (and JSON via the underlying types).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::annotations::AnnotationSet;
use crate::calibration::SweepResult;
use crate::metrics::{agreement, AgreementReport, Distribution, Granularity, MetricsError};
use crate::taxonomy::ViolenceClass;
use crate::temporal::{EngagementStats, RegressionResult};

/// Two-decimal metric cell in the `.69` style (leading zero trimmed).
pub fn fmt_metric(value: f64) -> String {
    let s = format!("{value:.2}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// Two-decimal share cell with its leading zero (`0.58` style).
pub fn fmt_share(value: f64) -> String {
    format!("{value:.2}")
}

/// Provenance block embedded at the top of every report file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
}

impl ReportMeta {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "- tool version: {}", self.tool_version);
        let _ = writeln!(out, "- config hash: {}", self.config_hash);
        let _ = writeln!(out, "- seed: {}", self.seed);
        for (name, digest) in &self.input_digests {
            let _ = writeln!(out, "- input {name}: sha256:{digest}");
        }
        out
    }
}

/// All ordered-pair agreement reports over a set of annotators.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementMatrix {
    pub annotators: Vec<String>,
    pub humans: BTreeSet<String>,
    pub granularity: Granularity,
    /// Keyed by (truth annotator, predicted annotator).
    pub reports: BTreeMap<String, AgreementReport>,
}

fn pair_key(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

impl AgreementMatrix {
    /// Compute every ordered pair. Any pair without overlapping posts is an
    /// error.
    pub fn compute(
        sets: &[AnnotationSet],
        humans: &BTreeSet<String>,
        granularity: Granularity,
    ) -> Result<AgreementMatrix, MetricsError> {
        let mut reports = BTreeMap::new();
        for truth in sets {
            for pred in sets {
                if truth.annotator_id() == pred.annotator_id() {
                    continue;
                }
                let report = agreement(truth, pred, granularity)?;
                reports.insert(
                    pair_key(truth.annotator_id(), pred.annotator_id()),
                    report,
                );
            }
        }
        Ok(AgreementMatrix {
            annotators: sets.iter().map(|s| s.annotator_id().to_string()).collect(),
            humans: humans.clone(),
            granularity,
        reports,
        })
    }

    pub fn get(&self, truth: &str, pred: &str) -> Option<&AgreementReport> {
        self.reports.get(&pair_key(truth, pred))
    }

    /// For one row, which non-human column is best per metric (kappa,
    /// weighted F1, macro F1); ties go to the earliest column.
    fn row_best(&self, row: &str) -> [Option<String>; 3] {
        let mut best: [Option<(f64, String)>; 3] = [None, None, None];
        for col in &self.annotators {
            if col == row || self.humans.contains(col) {
                continue;
            }
            let Some(report) = self.get(row, col) else {
                continue;
            };
            for (slot, value) in [report.kappa, report.f1_weighted, report.f1_macro]
                .into_iter()
                .enumerate()
            {
                if best[slot].as_ref().is_none_or(|(v, _)| value > *v) {
                    best[slot] = Some((value, col.clone()));
                }
            }
        }
        best.map(|slot| slot.map(|(_, col)| col))
    }

    /// Markdown matrix with `kappa/weighted F1/macro F1` cells; `*` marks the
    /// best non-human annotator per row and metric, `-` the diagonal.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "| |");
        for col in &self.annotators {
            let _ = write!(out, " {col} |");
        }
        let _ = writeln!(out);
        let _ = write!(out, "|---|");
        for _ in &self.annotators {
            let _ = write!(out, "---|");
        }
        let _ = writeln!(out);
        for row in &self.annotators {
            let best = self.row_best(row);
            let _ = write!(out, "| {row} |");
            for col in &self.annotators {
                if col == row {
                    let _ = write!(out, " - |");
                    continue;
                }
                match self.get(row, col) {
                    Some(report) => {
                        let cells = [report.kappa, report.f1_weighted, report.f1_macro];
                        let rendered: Vec<String> = cells
                            .into_iter()
                            .enumerate()
                            .map(|(slot, value)| {
                                let star = best[slot].as_deref() == Some(col.as_str());
                                format!("{}{}", fmt_metric(value), if star { "*" } else { "" })
                            })
                            .collect();
                        let _ = write!(out, " {} |", rendered.join("/"));
                    }
                    None => {
                        let _ = write!(out, " n/a |");
                    }
                }
            }
            let _ = writeln!(out);
        }
        out
    }
}

/// Relative changes of the violent-class shares between the smallest and
/// largest swept size, from the sweep's own (rounded) distributions.
pub fn share_drops(sweep: &SweepResult) -> Vec<(ViolenceClass, f64)> {
    let mut sized: Vec<_> = sweep
        .outcomes
        .iter()
        .filter_map(|o| o.distribution.as_ref().map(|d| (o.batch_size, d)))
        .collect();
    sized.sort_by_key(|(size, _)| *size);
    let (Some((_, first)), Some((_, last))) = (sized.first(), sized.last()) else {
        return Vec::new();
    };
    let mut drops = Vec::new();
    for (idx, class) in [ViolenceClass::Explicit, ViolenceClass::Implicit]
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c))
    {
        if first.shares[idx] > 0.0 {
            drops.push((class, (first.shares[idx] - last.shares[idx]) / first.shares[idx]));
        }
    }
    drops
}

/// Markdown distribution table: one row per coarse class, one column per
/// batch size plus the human reference, each cell `share (ratio)` with the
/// ratio taken against the smallest size's distribution.
pub fn sweep_markdown(sweep: &SweepResult, reference: Option<&Distribution>) -> String {
    let mut out = String::new();
    let mut sized: Vec<_> = sweep
        .outcomes
        .iter()
        .filter_map(|o| o.distribution.as_ref().map(|d| (o.batch_size, d)))
        .collect();
    sized.sort_by_key(|(size, _)| *size);
    let Some((_, base)) = sized.first() else {
        return "no usable distributions\n".into();
    };
    let base_shares = base.shares.clone();
    let _ = write!(out, "| |");
    for (size, _) in &sized {
        let _ = write!(out, " s={size} |");
    }
    if reference.is_some() {
        let _ = write!(out, " H-∅ |");
    }
    let _ = writeln!(out);
    let _ = write!(out, "|---|");
    for _ in 0..sized.len() + reference.is_some() as usize {
        let _ = write!(out, "---|");
    }
    let _ = writeln!(out);
    for (idx, class) in ViolenceClass::ALL.iter().enumerate() {
        let _ = write!(out, "| {} |", class.short_name());
        for (_, dist) in &sized {
            let ratio = dist.ratios_to(&base_shares)[idx];
            let _ = write!(out, " {} ({}) |", fmt_share(dist.shares[idx]), fmt_share(ratio));
        }
        if let Some(reference) = reference {
            let ratio = reference.ratios_to(&base_shares)[idx];
            let _ = write!(
                out,
                " {} ({}) |",
                fmt_share(reference.shares[idx]),
                fmt_share(ratio)
            );
        }
        let _ = writeln!(out);
    }
    for (class, drop) in share_drops(sweep) {
        let verb = if drop >= 0.0 { "drops" } else { "rises" };
        let _ = writeln!(
            out,
            "\n{} share {verb} by {:.0}% from s={} to s={}.",
            class.short_name(),
            drop.abs() * 100.0,
            sized.first().map(|(s, _)| *s).unwrap_or(0),
            sized.last().map(|(s, _)| *s).unwrap_or(0),
        );
    }
    if let (Some(chosen), true) = (sweep.chosen_size, !sweep.distances.is_empty()) {
        let distance = sweep
            .outcomes
            .iter()
            .zip(&sweep.distances)
            .find(|(o, _)| o.batch_size == chosen)
            .and_then(|(_, d)| *d);
        match distance {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "\nSelected batch size: {chosen} (L1 distance to reference {d:.3})."
                );
            }
            None => {
                let _ = writeln!(out, "\nSelected batch size: {chosen}.");
            }
        }
    }
    out
}

/// Markdown regression table: one row per labeled series.
pub fn regression_markdown(rows: &[(String, RegressionResult)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| series | beta | p | stars | bins | unit |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for (label, fit) in rows {
        let _ = writeln!(
            out,
            "| {label} | {:.2}{} | {:.4} | {} | {} | per {} |",
            fit.beta,
            fit.stars,
            fit.p_value,
            if fit.stars.is_empty() { "n.s." } else { &fit.stars },
            fit.n_bins,
            fit.time_unit,
        );
    }
    out
}

/// One-paragraph engagement summary.
pub fn engagement_markdown(stats: &EngagementStats) -> String {
    let years = stats.min_active_secs as f64 / (365.25 * 86_400.0);
    format!(
        "{} users; mean {:.0} posts per user, median {:.0}; {:.1}% of users posted once; \
         the most active 10% posted at least {} times; {:.1}% stayed active for {:.1}+ years.\n",
        stats.users,
        stats.mean_posts,
        stats.median_posts,
        stats.single_post_share * 100.0,
        stats.p90_posts,
        stats.active_at_least_share * 100.0,
        years,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::SweepResult;
    use crate::metrics::Granularity;
    use crate::temporal::WeightMode;

    fn fixture_report(a: &str, b: &str, kappa: f64, wf1: f64, mf1: f64) -> AgreementReport {
        AgreementReport {
            annotator_a: a.into(),
            annotator_b: b.into(),
            kappa,
            f1_weighted: wf1,
            f1_macro: mf1,
            n: 3028,
            distribution_a: vec![0.7, 0.2, 0.1],
            distribution_b: vec![0.7, 0.2, 0.1],
        }
    }

    #[test]
    fn metric_cells_trim_leading_zero() {
        assert_eq!(fmt_metric(0.69), ".69");
        assert_eq!(fmt_metric(1.0), "1.00");
        assert_eq!(fmt_metric(-0.12), "-.12");
        assert_eq!(fmt_share(0.58), "0.58");
    }

    #[test]
    fn matrix_renders_reference_cell_format() {
        // stored reference values for a two-human fixture
        let mut matrix = AgreementMatrix {
            annotators: vec!["Human A".into(), "Human B".into()],
            humans: BTreeSet::from(["Human A".to_string(), "Human B".to_string()]),
            granularity: Granularity::Coarse,
            reports: BTreeMap::new(),
        };
        matrix.reports.insert(
            pair_key("Human A", "Human B"),
            fixture_report("Human A", "Human B", 0.69, 0.85, 0.77),
        );
        matrix.reports.insert(
            pair_key("Human B", "Human A"),
            fixture_report("Human B", "Human A", 0.69, 0.87, 0.77),
        );
        let markdown = matrix.to_markdown();
        assert!(markdown.contains(".69/.85/.77"), "{markdown}");
        assert!(markdown.contains(".69/.87/.77"), "{markdown}");
        assert!(markdown.contains(" - |"), "{markdown}");
    }

    #[test]
    fn matrix_stars_best_non_human_per_metric() {
        let ids = ["Human A", "model-20", "model-100"];
        let mut matrix = AgreementMatrix {
            annotators: ids.iter().map(|s| s.to_string()).collect(),
            humans: BTreeSet::from(["Human A".to_string()]),
            granularity: Granularity::Coarse,
            reports: BTreeMap::new(),
        };
        matrix.reports.insert(
            pair_key("Human A", "model-20"),
            fixture_report("Human A", "model-20", 0.54, 0.76, 0.63),
        );
        matrix.reports.insert(
            pair_key("Human A", "model-100"),
            fixture_report("Human A", "model-100", 0.52, 0.75, 0.60),
        );
        matrix.reports.insert(
            pair_key("model-20", "Human A"),
            fixture_report("model-20", "Human A", 0.54, 0.75, 0.63),
        );
        matrix.reports.insert(
            pair_key("model-20", "model-100"),
            fixture_report("model-20", "model-100", 0.65, 0.81, 0.71),
        );
        matrix.reports.insert(
            pair_key("model-100", "Human A"),
            fixture_report("model-100", "Human A", 0.52, 0.78, 0.60),
        );
        matrix.reports.insert(
            pair_key("model-100", "model-20"),
            fixture_report("model-100", "model-20", 0.65, 0.84, 0.71),
        );
        let markdown = matrix.to_markdown();
        // in the Human A row, model-20 wins all three metrics
        assert!(markdown.contains(".54*/.76*/.63*"), "{markdown}");
        assert!(markdown.contains(".52/.75/.60"), "{markdown}");
    }

    #[test]
    fn sweep_table_shows_shares_and_ratios() {
        let entries = [
            (10, Distribution::from_shares(Granularity::Coarse, vec![0.58, 0.28, 0.14], 3028)),
            (20, Distribution::from_shares(Granularity::Coarse, vec![0.62, 0.26, 0.12], 3028)),
        ];
        let sweep = SweepResult::from_distributions(&entries);
        let reference =
            Distribution::from_shares(Granularity::Coarse, vec![0.70, 0.22, 0.07], 3028);
        let markdown = sweep_markdown(&sweep, Some(&reference));
        assert!(markdown.contains("| Non. | 0.58 (1.00) | 0.62 (1.07) | 0.70 (1.21) |"), "{markdown}");
        assert!(markdown.contains("s=10"), "{markdown}");
        assert!(markdown.contains("H-∅"), "{markdown}");
    }

    #[test]
    fn regression_table_fixture_rows() {
        // stored reference slopes for the user-journey figure
        let rows = vec![
            (
                "user-journey combined".to_string(),
                RegressionResult {
                    beta: 0.07,
                    intercept: 0.1,
                    p_value: 0.0004,
                    stars: "***".into(),
                    n_bins: 50,
                    time_unit: "year".into(),
                    beta_per_second: 0.07 / 31_557_600.0,
                    weight_mode: WeightMode::Unweighted,
                },
            ),
            (
                "forum general".to_string(),
                RegressionResult {
                    beta: 0.06,
                    intercept: 0.05,
                    p_value: 0.02,
                    stars: "*".into(),
                    n_bins: 50,
                    time_unit: "year".into(),
                    beta_per_second: 0.06 / 31_557_600.0,
                    weight_mode: WeightMode::Unweighted,
                },
            ),
        ];
        let markdown = regression_markdown(&rows);
        assert!(markdown.contains("0.07***"), "{markdown}");
        assert!(markdown.contains("0.06*"), "{markdown}");
    }

    #[test]
    fn engagement_summary_fixture() {
        // stored reference engagement numbers
        let stats = EngagementStats {
            users: 11_774,
            mean_posts: 586.0,
            median_posts: 24.0,
            single_post_share: 0.238,
            p90_posts: 1_152,
            min_active_secs: super::super::temporal::engagement::DEFAULT_MIN_ACTIVE_SECS,
            active_at_least_share: 0.10,
        };
        let text = engagement_markdown(&stats);
        assert!(text.contains("mean 586"), "{text}");
        assert!(text.contains("median 24"), "{text}");
        assert!(text.contains("23.8%"), "{text}");
        assert!(text.contains("1152"), "{text}");
    }
}
