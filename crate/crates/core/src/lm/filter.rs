use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Greedy diversity selection over `candidates` (already in descending
/// logit order): a token is kept only if its token embedding has cosine
/// below `th_w` with every token kept so far. At most `k_s` are kept; the
/// first candidate always is.
pub fn diversity_filter(
    candidates: &[TokenId],
    vocab: &Vocabulary,
    th_w: f64,
    k_s: usize,
) -> Result<Vec<TokenId>> {
    if candidates.is_empty() {
        return Err(Error::Empty("diversity filter candidates"));
    }
    let mut kept: Vec<TokenId> = Vec::with_capacity(k_s.min(candidates.len()));
    for &id in candidates {
        if kept.len() >= k_s.max(1) {
            break;
        }
        let emb = vocab.token_emb(id);
        if kept.iter().all(|&k| emb.cosine(vocab.token_emb(k)) < th_w) {
            kept.push(id);
        }
    }
    Ok(kept)
}
