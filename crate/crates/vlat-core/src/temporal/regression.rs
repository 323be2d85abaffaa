//! Simple OLS of share over elapsed time, with a two-sided t-test on the
//! slope and the usual significance stars.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::series::BinnedSeries;
use super::TemporalError;

/// Whether bins count equally or proportionally to their post count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Every populated bin counts once.
    #[default]
    Unweighted,
    /// Bins are weighted by `n_posts`; pooled user-relative bins have wildly
    /// varying support, so this mode is offered alongside the default.
    PostCount,
}

/// Fitted slope and its significance for one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Share change per time unit (see `time_unit`).
    pub beta: f64,
    pub intercept: f64,
    pub p_value: f64,
    pub stars: String,
    pub n_bins: usize,
    pub time_unit: String,
    /// The same slope in share per second, for cross-scope comparison.
    pub beta_per_second: f64,
    pub weight_mode: WeightMode,
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05, empty otherwise.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Fit share = intercept + beta * elapsed over the series' populated bins.
///
/// Slope and intercept come from the normal equations; the p-value is a
/// two-sided t-test on the slope with n-2 degrees of freedom. A perfect fit
/// (zero residual) yields p = 0 for a nonzero slope and p = 1 for a flat one.
pub fn ols_fit(series: &BinnedSeries, mode: WeightMode) -> Result<RegressionResult, TemporalError> {
    let n = series.bins.len();
    if n < 3 {
        return Err(TemporalError::TooFewBins(n));
    }
    let xs: Vec<f64> = series.bins.iter().map(|b| b.elapsed).collect();
    let ys: Vec<f64> = series.bins.iter().map(|b| b.share).collect();
    let ws: Vec<f64> = match mode {
        WeightMode::Unweighted => vec![1.0; n],
        WeightMode::PostCount => series.bins.iter().map(|b| b.n_posts as f64).collect(),
    };
    let w_total: f64 = ws.iter().sum();
    let mean_x = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / w_total;
    let mean_y = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / w_total;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += ws[i] * (xs[i] - mean_x) * (xs[i] - mean_x);
        sxy += ws[i] * (xs[i] - mean_x) * (ys[i] - mean_y);
    }
    if sxx == 0.0 {
        return Err(TemporalError::ZeroTimeVariance);
    }
    let beta = sxy / sxx;
    let intercept = mean_y - beta * mean_x;
    let df = (n - 2) as f64;
    let sse: f64 = (0..n)
        .map(|i| {
            let r = ys[i] - intercept - beta * xs[i];
            ws[i] * r * r
        })
        .sum();
    let p_value = if sse <= 0.0 {
        if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let se = (sse / df / sxx).sqrt();
        let t = beta / se;
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(RegressionResult {
        beta,
        intercept,
        p_value,
        stars: significance_stars(p_value).to_string(),
        n_bins: n,
        time_unit: series.time_unit.clone(),
        beta_per_second: beta / series.unit_seconds,
        weight_mode: mode,
    })
}
