use vlat_core::annotator::{
    estimate_cost, DEFAULT_POST_TOKENS, DEFAULT_PRICE_PER_1000, DEFAULT_PROMPT_TOKENS,
};

use crate::{CliError, CostArgs};

pub fn run(args: &CostArgs) -> Result<(), CliError> {
    let projection = estimate_cost(
        args.posts,
        args.batch_size,
        args.prompt_tokens.unwrap_or(DEFAULT_PROMPT_TOKENS),
        args.post_tokens.unwrap_or(DEFAULT_POST_TOKENS),
        args.price.unwrap_or(DEFAULT_PRICE_PER_1000),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&projection).expect("projection serializes")
        );
        return Ok(());
    }
    println!(
        "{} posts at batch size {}: {} batches",
        projection.n_posts, projection.batch_size, projection.batches
    );
    println!(
        "per full batch: {} tokens ≈ ${:.4}",
        projection.tokens_per_full_batch, projection.cost_per_full_batch
    );
    println!(
        "total input: {} tokens ≈ ${:.2} (${:.4}/post)",
        projection.total_input_tokens, projection.total_input_cost, projection.cost_per_post
    );
    Ok(())
}
