//! Token and cost accounting: upfront projections for planning a run and
//! the ledger of what a run actually consumed.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

/// Default prompt size used for projections when no template is at hand.
pub const DEFAULT_PROMPT_TOKENS: u64 = 500;
/// Default per-post token estimate for projections.
pub const DEFAULT_POST_TOKENS: u64 = 50;
/// Default input price per 1,000 tokens, in dollars.
pub const DEFAULT_PRICE_PER_1000: f64 = 0.01;

#[derive(Debug, Error)]
#[error("cost projection inputs must be positive: {0}")]
pub struct CostError(pub String);

/// Input-cost projection for annotating `n_posts` at a given batch size.
///
/// The prompt is resent with every batch while each post is sent once, so
/// total input tokens are `batches * prompt_tokens + n_posts * post_tokens`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostProjection {
    pub n_posts: u64,
    pub batch_size: u64,
    pub prompt_tokens: u64,
    pub post_tokens: u64,
    pub price_per_1000_tokens: f64,
    pub batches: u64,
    pub tokens_per_full_batch: u64,
    pub cost_per_full_batch: f64,
    pub total_input_tokens: u64,
    pub total_input_cost: f64,
    pub cost_per_post: f64,
}

pub fn estimate_cost(
    n_posts: u64,
    batch_size: u64,
    prompt_tokens: u64,
    post_tokens: u64,
    price_per_1000: f64,
) -> Result<CostProjection, CostError> {
    for (name, value) in [
        ("n_posts", n_posts),
        ("batch_size", batch_size),
        ("prompt_tokens", prompt_tokens),
        ("post_tokens", post_tokens),
    ] {
        if value == 0 {
            return Err(CostError(format!("{name} is zero")));
        }
    }
    if price_per_1000 <= 0.0 {
        return Err(CostError("price_per_1000 is not positive".into()));
    }
    let batches = n_posts.div_ceil(batch_size);
    let tokens_per_full_batch = prompt_tokens + batch_size * post_tokens;
    let total_input_tokens = batches * prompt_tokens + n_posts * post_tokens;
    let total_input_cost = total_input_tokens as f64 * price_per_1000 / 1000.0;
    Ok(CostProjection {
        n_posts,
        batch_size,
        prompt_tokens,
        post_tokens,
        price_per_1000_tokens: price_per_1000,
        batches,
        tokens_per_full_batch,
        cost_per_full_batch: tokens_per_full_batch as f64 * price_per_1000 / 1000.0,
        total_input_tokens,
        total_input_cost,
        cost_per_post: total_input_cost / n_posts as f64,
    })
}

/// What an annotation run actually consumed. Token counts come from the
/// backend when it reports usage and from the estimator otherwise;
/// `token_counts_actual` says which. Wall time is kept out of serialized
/// reports so re-runs stay byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    pub prompt_tokens_per_batch: u64,
    pub post_tokens_total: u64,
    pub output_tokens_total: u64,
    pub price_per_1000_tokens: f64,
    pub batches_sent: u64,
    pub retries: u64,
    pub total_cost: f64,
    pub cost_per_post: f64,
    pub token_counts_actual: bool,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    actual_input_tokens: u64,
    #[serde(skip)]
    requests_with_usage: u64,
}

impl CostLedger {
    pub fn new(prompt_tokens_per_batch: u64, price_per_1000_tokens: f64) -> CostLedger {
        CostLedger {
            prompt_tokens_per_batch,
            price_per_1000_tokens,
            ..CostLedger::default()
        }
    }

    /// Account one request that was actually sent.
    pub fn record_request(
        &mut self,
        post_tokens: u64,
        retries: u64,
        output_tokens_estimate: u64,
        usage: Option<crate::annotator::backend::TokenUsage>,
    ) {
        self.batches_sent += 1 + retries;
        self.retries += retries;
        self.post_tokens_total += post_tokens;
        match usage {
            Some(usage) => {
                self.actual_input_tokens += usage.prompt_tokens;
                self.output_tokens_total += usage.completion_tokens;
                self.requests_with_usage += 1;
            }
            None => self.output_tokens_total += output_tokens_estimate,
        }
    }

    /// Compute totals once the run is complete.
    pub fn finalize(&mut self, annotated_posts: u64, wall_time: Duration) {
        self.wall_time = wall_time;
        self.token_counts_actual =
            self.batches_sent > 0 && self.requests_with_usage == self.batches_sent - self.retries;
        let input_tokens = if self.token_counts_actual {
            self.actual_input_tokens
        } else {
            self.prompt_tokens_per_batch * self.batches_sent + self.post_tokens_total
        };
        self.total_cost =
            (input_tokens + self.output_tokens_total) as f64 * self.price_per_1000_tokens / 1000.0;
        self.cost_per_post = if annotated_posts > 0 {
            self.total_cost / annotated_posts as f64
        } else {
            0.0
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_per_post_cost() {
        let p = estimate_cost(1, 1, 500, 50, 0.01).unwrap();
        assert!((p.cost_per_post - 0.0055).abs() < 1e-12);
        assert_eq!(p.tokens_per_full_batch, 550);
    }

    #[test]
    fn batched_cost_per_batch() {
        let p = estimate_cost(50, 50, 500, 50, 0.01).unwrap();
        assert_eq!(p.tokens_per_full_batch, 3000);
        assert!((p.cost_per_full_batch - 0.03).abs() < 1e-12);
    }

    #[test]
    fn corpus_scale_totals() {
        let batched = estimate_cost(33_028, 50, 500, 50, 0.01).unwrap();
        assert!((batched.total_input_cost - 20.0).abs() / 20.0 < 0.05);
        let naive = estimate_cost(33_028, 1, 500, 50, 0.01).unwrap();
        assert!((naive.total_input_cost - 180.0).abs() / 180.0 < 0.05);
    }

    #[test]
    fn per_post_cost_non_increasing_in_batch_size() {
        let mut previous = f64::INFINITY;
        for batch_size in 1..=300 {
            let p = estimate_cost(10_000, batch_size, 500, 50, 0.01).unwrap();
            assert!(
                p.cost_per_post <= previous + 1e-15,
                "cost per post rose at batch size {batch_size}"
            );
            previous = p.cost_per_post;
        }
    }

    #[test]
    fn zero_inputs_rejected() {
        assert!(estimate_cost(0, 1, 500, 50, 0.01).is_err());
        assert!(estimate_cost(1, 1, 500, 50, 0.0).is_err());
    }

    #[test]
    fn ledger_estimate_path_matches_formula() {
        let mut ledger = CostLedger::new(500, 0.01);
        ledger.record_request(2500, 0, 100, None);
        ledger.record_request(2500, 1, 100, None);
        ledger.finalize(100, Duration::from_secs(1));
        assert!(!ledger.token_counts_actual);
        assert_eq!(ledger.batches_sent, 3);
        // (500 * 3 + 5000 + 200) * 0.01 / 1000
        assert!((ledger.total_cost - 0.067).abs() < 1e-12);
    }

    #[test]
    fn ledger_prefers_reported_usage() {
        use crate::annotator::backend::TokenUsage;
        let mut ledger = CostLedger::new(500, 0.01);
        ledger.record_request(
            2500,
            0,
            0,
            Some(TokenUsage {
                prompt_tokens: 3100,
                completion_tokens: 240,
            }),
        );
        ledger.finalize(50, Duration::from_secs(1));
        assert!(ledger.token_counts_actual);
        assert!((ledger.total_cost - (3340.0 * 0.01 / 1000.0)).abs() < 1e-12);
    }
}
