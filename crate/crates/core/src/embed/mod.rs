//! Embedding providers behind a single port, plus the accounted victim handle.

mod hash;
mod linear;
mod victim;

pub use hash::{hash_embed, HashEmbedder};
pub use linear::LinearVictim;
pub use victim::{victim_query, VictimHandle};

use crate::error::Result;
use crate::types::Embedding;

/// Anything that maps a batch of texts to embeddings of a fixed dimension.
pub trait EmbedderPort: Send + Sync {
    fn dim(&self) -> usize;

    /// Returns exactly one embedding of dimension [`dim`](Self::dim) per text.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

impl<T: EmbedderPort + ?Sized> EmbedderPort for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}
