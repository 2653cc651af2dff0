use serde::{Deserialize, Serialize};

use super::EmbedderPort;
use crate::error::Result;
use crate::types::Embedding;

/// Signed feature hashing of character n-grams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub dim: usize,
    #[serde(default = "default_ngram")]
    pub ngram: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_ngram() -> usize {
    3
}

impl HashEmbedder {
    pub fn new(dim: usize, ngram: usize, seed: u64) -> Self {
        assert!(dim > 0, "hash embedder needs a positive dimension");
        assert!(ngram > 0, "hash embedder needs a positive n-gram size");
        Self { dim, ngram, seed }
    }

    pub fn embed(&self, text: &str) -> Embedding {
        hash_embed(self, text)
    }
}

/// Embeds `text` by hashing the character n-grams of ` lowercase(text) `
/// into signed buckets. The empty string (and the degenerate case where all
/// buckets cancel) maps to the first basis vector.
pub fn hash_embed(e: &HashEmbedder, text: &str) -> Embedding {
    if text.is_empty() {
        return Embedding::basis(e.dim, 0);
    }
    let mut padded = Vec::with_capacity(text.len() + 2);
    padded.push(' ');
    padded.extend(text.to_lowercase().chars());
    padded.push(' ');

    let mut acc = vec![0.0f64; e.dim];
    let mut buf = [0u8; 4];
    let mut add = |gram: &[char]| {
        let mut h = FNV_OFFSET ^ mix(e.seed);
        for c in gram {
            for b in c.encode_utf8(&mut buf).bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(FNV_PRIME);
            }
        }
        let h = mix(h);
        let bucket = (h % e.dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    };
    if padded.len() <= e.ngram {
        add(&padded);
    } else {
        padded.windows(e.ngram).for_each(&mut add);
    }

    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Embedding::basis(e.dim, 0);
    }
    acc.iter_mut().for_each(|v| *v /= norm);
    Embedding::new(acc).expect("finite hash embedding")
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EmbedderPort for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}
