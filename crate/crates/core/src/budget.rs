//! Token budget arithmetic for thumbnail-and-sampling.

use crate::error::{Error, Result};
use crate::model::{CompressionConfig, TokenBudget};

/// Splits `token_budget` between `n_thumbnails` thumbnail images and the
/// sampled pathway.
pub fn plan(config: &CompressionConfig) -> Result<TokenBudget> {
    plan_counts(config.n_frames, config.tokens_per_image, config.token_budget, config.n_thumbnails)
}

/// [`plan`] from raw counts: `n_frames` frames of `tokens_per_image` tokens,
/// a total budget, and `n_thumbnails` thumbnail images.
pub fn plan_counts(
    n_frames: usize,
    tokens_per_image: usize,
    token_budget: usize,
    n_thumbnails: usize,
) -> Result<TokenBudget> {
    let thumbnail_tokens = n_thumbnails.saturating_mul(tokens_per_image);
    if token_budget <= thumbnail_tokens {
        return Err(Error::BudgetTooSmall { budget: token_budget, thumbnail_tokens });
    }
    let sampled_tokens = token_budget - thumbnail_tokens;
    Ok(TokenBudget {
        thumbnail_tokens,
        sampled_tokens,
        total: token_budget,
        sampling_compression_rate: (n_frames as f64 * tokens_per_image as f64) / sampled_tokens as f64,
    })
}

/// Whether the visual tokens plus `reserved_text` prompt tokens fit in the
/// LLM context window.
pub fn fits_context(budget: &TokenBudget, context_length: usize, reserved_text: usize) -> bool {
    budget.total.checked_add(reserved_text).is_some_and(|needed| needed <= context_length)
}
