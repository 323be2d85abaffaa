//! Agreement and distribution measurement between annotation sets:
//! confusion matrices, Cohen's kappa, weighted/macro F1, class
//! distributions, and the position-in-batch bias test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::annotations::AnnotationSet;
use crate::taxonomy::{Label, ViolenceClass};

/// Class universe used for a measurement: the three coarse violence classes
/// or the full seven-label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Coarse,
    Full,
}

impl Granularity {
    pub fn class_names(self) -> Vec<&'static str> {
        match self {
            Granularity::Coarse => ViolenceClass::ALL.iter().map(|c| c.name()).collect(),
            Granularity::Full => Label::ALL.iter().map(|l| l.code()).collect(),
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            Granularity::Coarse => 3,
            Granularity::Full => 7,
        }
    }

    pub fn class_index(self, label: Label) -> usize {
        match self {
            Granularity::Coarse => ViolenceClass::ALL
                .iter()
                .position(|c| *c == label.coarse())
                .expect("coarse class is total"),
            Granularity::Full => Label::ALL
                .iter()
                .position(|l| *l == label)
                .expect("label set is total"),
        }
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("annotation sets share no post ids")]
    EmptyIntersection,
    #[error("empty annotation set")]
    EmptySet,
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("degenerate chance agreement: expected agreement is 1 but observed is {0}")]
    DegenerateChance(f64),
    #[error("position bias needs at least 2 distinct ordinals")]
    TooFewPositions,
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Count joint labels over the intersection of the two sets' post ids.
pub fn confusion(
    truth: &AnnotationSet,
    pred: &AnnotationSet,
    granularity: Granularity,
) -> Result<ConfusionMatrix, MetricsError> {
    let k = granularity.class_count();
    let mut counts = vec![vec![0u64; k]; k];
    let mut total = 0u64;
    for (post_id, truth_label) in truth.iter() {
        if let Some(pred_label) = pred.label(post_id) {
            counts[granularity.class_index(truth_label)]
                [granularity.class_index(pred_label)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyIntersection);
    }
    Ok(ConfusionMatrix {
        classes: granularity.class_names().iter().map(|s| s.to_string()).collect(),
        counts,
    })
}

/// Cohen's kappa: (p_o - p_e) / (1 - p_e), with p_o the diagonal share and
/// p_e the chance agreement from the marginals. Perfect agreement with
/// degenerate marginals yields 1; degenerate marginals with imperfect
/// agreement cannot arise from integer counts but are rejected defensively.
pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = m.total();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = m.classes.len();
    // integer check for the p_e == 1 corner: sum(row_i * col_i) == n^2
    let chance_mass: u128 = (0..k)
        .map(|i| m.row_total(i) as u128 * m.col_total(i) as u128)
        .sum();
    let p_o = m.diagonal() as f64 / n as f64;
    if chance_mass == (n as u128) * (n as u128) {
        if m.diagonal() == n {
            return Ok(1.0);
        }
        return Err(MetricsError::DegenerateChance(p_o));
    }
    let p_e = chance_mass as f64 / (n as f64 * n as f64);
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Per-class and averaged F1 scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Scores {
    pub weighted: f64,
    pub macro_avg: f64,
    /// Indexed like the matrix classes; `None` for classes absent from truth
    /// (they carry no support and are excluded from both averages).
    pub per_class: Vec<Option<f64>>,
}

/// F1 per class (2PR/(P+R), zero when P+R is zero), weighted by truth
/// support and macro-averaged over classes present in truth.
pub fn f1_scores(m: &ConfusionMatrix) -> Result<F1Scores, MetricsError> {
    let n = m.total();
    if n == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = m.classes.len();
    let mut per_class = vec![None; k];
    let mut weighted = 0.0;
    let mut macro_sum = 0.0;
    let mut macro_classes = 0usize;
    for i in 0..k {
        let support = m.row_total(i);
        if support == 0 {
            continue;
        }
        let tp = m.counts[i][i] as f64;
        let predicted = m.col_total(i) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class[i] = Some(f1);
        weighted += f1 * support as f64 / n as f64;
        macro_sum += f1;
        macro_classes += 1;
    }
    Ok(F1Scores {
        weighted,
        macro_avg: macro_sum / macro_classes as f64,
        per_class,
    })
}

/// Per-class shares of one annotation set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub classes: Vec<String>,
    pub shares: Vec<f64>,
    pub n: usize,
}

impl Distribution {
    pub fn from_shares(granularity: Granularity, shares: Vec<f64>, n: usize) -> Distribution {
        Distribution {
            classes: granularity.class_names().iter().map(|s| s.to_string()).collect(),
            shares,
            n,
        }
    }

    /// Per-class ratio of this distribution to a reference distribution.
    /// A zero reference share yields `NaN` only when this share is nonzero;
    /// 0/0 is reported as 1 (no change).
    pub fn ratios_to(&self, reference: &[f64]) -> Vec<f64> {
        self.shares
            .iter()
            .zip(reference)
            .map(|(&s, &r)| {
                if r == 0.0 {
                    if s == 0.0 {
                        1.0
                    } else {
                        f64::NAN
                    }
                } else {
                    s / r
                }
            })
            .collect()
    }

    /// L1 distance to another share vector.
    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.shares
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

pub fn class_distribution(
    set: &AnnotationSet,
    granularity: Granularity,
) -> Result<Distribution, MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut counts = vec![0usize; granularity.class_count()];
    for (_, label) in set.iter() {
        counts[granularity.class_index(label)] += 1;
    }
    let n = set.len();
    let shares = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(Distribution::from_shares(granularity, shares, n))
}

/// Kappa, both F1 averages, and the two marginal distributions for one
/// ordered annotator pair, computed over their shared posts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub annotator_a: String,
    pub annotator_b: String,
    pub kappa: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    pub n: usize,
    pub distribution_a: Vec<f64>,
    pub distribution_b: Vec<f64>,
}

/// Agreement of `pred` against `truth` over their common posts. Kappa is
/// symmetric in the pair; the F1 scores are not.
pub fn agreement(
    truth: &AnnotationSet,
    pred: &AnnotationSet,
    granularity: Granularity,
) -> Result<AgreementReport, MetricsError> {
    let m = confusion(truth, pred, granularity)?;
    let kappa = cohen_kappa(&m)?;
    let f1 = f1_scores(&m)?;
    let n = m.total() as usize;
    let dist = |marginal: &dyn Fn(usize) -> u64| -> Vec<f64> {
        (0..m.classes.len())
            .map(|i| marginal(i) as f64 / n as f64)
            .collect()
    };
    Ok(AgreementReport {
        annotator_a: truth.annotator_id().to_string(),
        annotator_b: pred.annotator_id().to_string(),
        kappa,
        f1_weighted: f1.weighted,
        f1_macro: f1.macro_avg,
        n,
        distribution_a: dist(&|i| m.row_total(i)),
        distribution_b: dist(&|i| m.col_total(i)),
    })
}

/// Result of the position-in-batch sensitivity test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionBias {
    /// Pearson correlation between ordinal and the binary violent indicator.
    pub correlation: f64,
    /// Two-sided permutation-test p-value.
    pub p_value: f64,
    /// Set when every label has the same violent indicator, which leaves the
    /// correlation undefined; it is then reported as 0 with p = 1.
    pub degenerate: bool,
    pub n: usize,
}

pub const POSITION_BIAS_PERMUTATIONS: usize = 10_000;

/// Correlation between a post's ordinal within its batch and whether it was
/// labeled violent, with a seeded permutation test.
pub fn position_bias(
    samples: &[(u32, bool)],
    permutations: usize,
    seed: u64,
) -> Result<PositionBias, MetricsError> {
    let first = samples.first().ok_or(MetricsError::TooFewPositions)?;
    if samples.iter().all(|(o, _)| o == &first.0) {
        return Err(MetricsError::TooFewPositions);
    }
    let xs: Vec<f64> = samples.iter().map(|(o, _)| *o as f64).collect();
    let mut ys: Vec<f64> = samples
        .iter()
        .map(|(_, v)| if *v { 1.0 } else { 0.0 })
        .collect();
    let observed = match pearson(&xs, &ys) {
        Some(r) => r,
        None => {
            return Ok(PositionBias {
                correlation: 0.0,
                p_value: 1.0,
                degenerate: true,
                n: samples.len(),
            })
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_least_as_extreme = 0usize;
    for _ in 0..permutations {
        ys.shuffle(&mut rng);
        let r = pearson(&xs, &ys).unwrap_or(0.0);
        if r.abs() >= observed.abs() - 1e-12 {
            at_least_as_extreme += 1;
        }
    }
    Ok(PositionBias {
        correlation: observed,
        p_value: (1 + at_least_as_extreme) as f64 / (1 + permutations) as f64,
        degenerate: false,
        n: samples.len(),
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x).powi(2);
        var_y += (y - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}
