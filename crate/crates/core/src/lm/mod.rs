//! Candidate-token generation.
//!
//! The generator is anything implementing [`TokenGenerator`]; the bundled
//! backend is an add-k smoothed word n-gram model. Masking rules and the
//! diversity filter live here too since they act on the generator's output.

mod filter;
mod ngram;
mod vocab;

pub use filter::diversity_filter;
pub use ngram::{train_ngram, NGramLm, MODEL_MAGIC, MODEL_VERSION};
pub use vocab::{TokenId, Vocabulary, BOS, EOS, TOKEN_EMB_DIM};

use crate::config::AttackConfig;

/// Source of next-token distributions over a fixed vocabulary.
pub trait TokenGenerator: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Unmasked log-probabilities for every vocabulary entry. `context`
    /// starts with BOS.
    fn log_probs(&self, context: &[TokenId]) -> Vec<f64>;
}

/// Logits for the next token at step `iteration` (1-based).
///
/// Non-ASCII tokens and BOS are set to `-inf`. At the first step,
/// non-alphabetic tokens are shifted by `cfg.first_step_penalty`.
pub fn next_token_logits(
    generator: &dyn TokenGenerator,
    context: &[TokenId],
    iteration: usize,
    cfg: &AttackConfig,
) -> Vec<f64> {
    let vocab = generator.vocab();
    let mut logits = generator.log_probs(context);
    for (id, logit) in logits.iter_mut().enumerate() {
        let id = id as TokenId;
        if id == vocab.bos_id() || !vocab.is_ascii(id) {
            *logit = f64::NEG_INFINITY;
        } else if iteration == 1 && !vocab.is_alphabetic(id) {
            *logit += cfg.first_step_penalty;
        }
    }
    logits
}

/// Token ids with finite logits, sorted by descending logit (ties by id).
pub fn ranked_ids(logits: &[f64]) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..logits.len() as TokenId)
        .filter(|&i| logits[i as usize].is_finite())
        .collect();
    ids.sort_by(|&a, &b| {
        logits[b as usize]
            .total_cmp(&logits[a as usize])
            .then(a.cmp(&b))
    });
    ids
}
