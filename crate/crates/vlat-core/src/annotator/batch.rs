//! Batch assembly: partitioning posts into classification requests under a
//! token budget.

use serde::Serialize;
use thiserror::Error;

use super::template::{render_request, PromptTemplate};
use crate::corpus::Post;

/// Estimates token counts for budget checks and cost accounting. Backends
/// tokenize differently, so this is pluggable; the default heuristic is one
/// token per four characters.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> u64;
}

/// chars/4, rounded up, minimum 1 for non-empty text.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharsPerToken;

impl TokenEstimator for CharsPerToken {
    fn estimate(&self, text: &str) -> u64 {
        (text.chars().count() as u64).div_ceil(4)
    }
}

/// One post inside a batch, numbered from 1 in rendered order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchPost {
    pub ordinal: u32,
    pub post_id: String,
    pub text: String,
}

/// A fully rendered classification request for one batch of posts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRequest {
    pub batch_id: String,
    pub template_id: String,
    pub posts: Vec<BatchPost>,
    pub rendered_system: String,
    pub rendered_user: String,
}

impl BatchRequest {
    pub fn new(batch_id: impl Into<String>, template: &PromptTemplate, posts: &[Post]) -> Self {
        let parts: Vec<(String, String)> = posts
            .iter()
            .map(|p| (p.post_id.clone(), p.text.clone()))
            .collect();
        BatchRequest::from_texts(batch_id, template, &parts)
    }

    /// Build from bare (post_id, text) pairs; used when re-batching posts
    /// that are no longer backed by full [`Post`] values.
    pub fn from_texts(
        batch_id: impl Into<String>,
        template: &PromptTemplate,
        parts: &[(String, String)],
    ) -> Self {
        let texts: Vec<&str> = parts.iter().map(|(_, text)| text.as_str()).collect();
        let (rendered_system, rendered_user) = render_request(template, &texts);
        BatchRequest {
            batch_id: batch_id.into(),
            template_id: template.template_id.clone(),
            posts: parts
                .iter()
                .enumerate()
                .map(|(i, (post_id, text))| BatchPost {
                    ordinal: (i + 1) as u32,
                    post_id: post_id.clone(),
                    text: text.clone(),
                })
                .collect(),
            rendered_system,
            rendered_user,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn post_ids(&self) -> Vec<String> {
        self.posts.iter().map(|p| p.post_id.clone()).collect()
    }
}

/// A post that cannot be sent because it alone blows the token budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OversizedPost {
    pub post_id: String,
    pub estimated_tokens: u64,
    pub token_budget: u64,
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("token budget {budget} does not exceed the prompt's {prompt_tokens} tokens")]
    BudgetBelowPrompt { budget: u64, prompt_tokens: u64 },
}

/// Partition `posts`, in order, into consecutive batches of `batch_size`
/// (the final batch may be smaller). Any batch whose estimated total tokens
/// (prompt + posts) would exceed `token_budget` is split in half until it
/// fits; a single post that still exceeds the budget is excluded and
/// reported. Every retained post lands in exactly one batch.
pub fn assemble_batches(
    posts: &[Post],
    template: &PromptTemplate,
    batch_size: usize,
    token_budget: u64,
    estimator: &dyn TokenEstimator,
) -> Result<(Vec<BatchRequest>, Vec<OversizedPost>), BatchError> {
    if batch_size == 0 {
        return Err(BatchError::ZeroBatchSize);
    }
    let prompt_tokens = estimate_prompt_tokens(template, estimator);
    if token_budget <= prompt_tokens {
        return Err(BatchError::BudgetBelowPrompt {
            budget: token_budget,
            prompt_tokens,
        });
    }
    let mut chunks: Vec<&[Post]> = Vec::new();
    let mut oversized = Vec::new();
    for chunk in posts.chunks(batch_size) {
        fit_chunk(
            chunk,
            prompt_tokens,
            token_budget,
            estimator,
            &mut chunks,
            &mut oversized,
        );
    }
    let batches = chunks
        .iter()
        .enumerate()
        .map(|(i, chunk)| BatchRequest::new(format!("b{i:04}"), template, chunk))
        .collect();
    Ok((batches, oversized))
}

/// Estimated tokens of the rendered system message (post-independent).
pub fn estimate_prompt_tokens(template: &PromptTemplate, estimator: &dyn TokenEstimator) -> u64 {
    let (system, _) = render_request(template, &[]);
    estimator.estimate(&system)
}

fn fit_chunk<'a>(
    chunk: &'a [Post],
    prompt_tokens: u64,
    token_budget: u64,
    estimator: &dyn TokenEstimator,
    out: &mut Vec<&'a [Post]>,
    oversized: &mut Vec<OversizedPost>,
) {
    let post_tokens: u64 = chunk.iter().map(|p| estimator.estimate(&p.text)).sum();
    if prompt_tokens + post_tokens <= token_budget {
        if !chunk.is_empty() {
            out.push(chunk);
        }
        return;
    }
    if chunk.len() == 1 {
        oversized.push(OversizedPost {
            post_id: chunk[0].post_id.clone(),
            estimated_tokens: prompt_tokens + post_tokens,
            token_budget,
        });
        return;
    }
    let (left, right) = chunk.split_at(chunk.len() / 2);
    fit_chunk(left, prompt_tokens, token_budget, estimator, out, oversized);
    fit_chunk(right, prompt_tokens, token_budget, estimator, out, oversized);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::template::builtin_template;

    fn posts_of(texts: &[&str]) -> Vec<Post> {
        texts
            .iter()
            .enumerate()
            .map(|(i, text)| Post {
                post_id: format!("p{i:03}"),
                user_id: "u".into(),
                thread_id: "t".into(),
                created_at: i as i64,
                text: text.to_string(),
            })
            .collect()
    }

    struct FixedTokens(u64);

    impl TokenEstimator for FixedTokens {
        fn estimate(&self, text: &str) -> u64 {
            if text.len() > 200 {
                // the rendered prompt
                500
            } else {
                self.0
            }
        }
    }

    #[test]
    fn no_posts_no_batches() {
        let template = builtin_template("baseline").unwrap();
        let (batches, oversized) =
            assemble_batches(&[], &template, 50, 100_000, &CharsPerToken).unwrap();
        assert!(batches.is_empty());
        assert!(oversized.is_empty());
    }

    #[test]
    fn partitions_into_batch_size_chunks() {
        let template = builtin_template("baseline").unwrap();
        let posts = posts_of(&vec!["short post"; 120]);
        let (batches, _) =
            assemble_batches(&posts, &template, 50, 100_000, &CharsPerToken).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![50, 50, 20]);
        // every post exactly once, in order, with contiguous ordinals
        let mut seen = Vec::new();
        for batch in &batches {
            for (i, post) in batch.posts.iter().enumerate() {
                assert_eq!(post.ordinal as usize, i + 1);
                seen.push(post.post_id.clone());
            }
        }
        assert_eq!(seen, posts.iter().map(|p| p.post_id.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn ten_typical_posts_fit_one_batch() {
        // ~50-token posts under a ~500-token prompt fit a 4,000-token budget
        let template = builtin_template("baseline").unwrap();
        let posts = posts_of(&["post"; 10]);
        let estimator = FixedTokens(50);
        let (batches, oversized) =
            assemble_batches(&posts, &template, 10, 4_000, &estimator).unwrap();
        assert_eq!(batches.len(), 1);
        assert!(oversized.is_empty());
    }

    #[test]
    fn splits_batches_over_budget() {
        let template = builtin_template("baseline").unwrap();
        let posts = posts_of(&["post"; 8]);
        // prompt 500 + 8 * 600 = 5300 > 2000; halves of 4 still exceed; pairs fit
        let estimator = FixedTokens(600);
        let (batches, oversized) =
            assemble_batches(&posts, &template, 8, 2_000, &estimator).unwrap();
        assert!(oversized.is_empty());
        assert!(batches.iter().all(|b| b.len() <= 2));
        let total: usize = batches.iter().map(|b| b.len()).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn oversized_single_post_is_excluded() {
        let template = builtin_template("baseline").unwrap();
        let posts = posts_of(&["ok", &"x".repeat(100)]);
        struct ByLength;
        impl TokenEstimator for ByLength {
            fn estimate(&self, text: &str) -> u64 {
                text.len() as u64
            }
        }
        // room for the short post but not the 100-char one
        let budget = estimate_prompt_tokens(&template, &ByLength) + 50;
        let (batches, oversized) =
            assemble_batches(&posts, &template, 2, budget, &ByLength).unwrap();
        assert_eq!(oversized.len(), 1);
        assert_eq!(oversized[0].post_id, "p001");
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].posts[0].post_id, "p000");
    }

    #[test]
    fn rejects_zero_batch_size_and_tiny_budget() {
        let template = builtin_template("baseline").unwrap();
        let posts = posts_of(&["x"]);
        assert!(matches!(
            assemble_batches(&posts, &template, 0, 1_000, &CharsPerToken),
            Err(BatchError::ZeroBatchSize)
        ));
        assert!(matches!(
            assemble_batches(&posts, &template, 1, 10, &CharsPerToken),
            Err(BatchError::BudgetBelowPrompt { .. })
        ));
    }
}
