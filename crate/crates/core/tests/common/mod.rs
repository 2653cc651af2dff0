#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use embinv_core::embed::EmbedderPort;
use embinv_core::{Embedding, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "so", "ta", "vi", "be", "du", "fo", "gi"];

/// `n_words` distinct pronounceable words.
pub fn words(n_words: usize) -> Vec<String> {
    let mut out = Vec::new();
    'outer: for a in SYLLABLES {
        for b in SYLLABLES {
            for c in SYLLABLES {
                if out.len() == n_words {
                    break 'outer;
                }
                out.push(format!("{a}{b}{c}"));
            }
        }
    }
    out
}

/// Random sentences of 3 to 6 words over `words(n_words)`.
pub fn corpus(n_sentences: usize, n_words: usize, seed: u64) -> Vec<String> {
    let vocab = words(n_words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| {
            let len = rng.random_range(3..=6);
            (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

/// Embedder wrapper that remembers every batch it served.
pub struct Recording {
    pub inner: Arc<dyn EmbedderPort>,
    pub batches: Mutex<Vec<Vec<String>>>,
}

impl Recording {
    pub fn new(inner: Arc<dyn EmbedderPort>) -> Arc<Self> {
        Arc::new(Self { inner, batches: Mutex::new(Vec::new()) })
    }

    pub fn batches(&self) -> Vec<Vec<String>> {
        self.batches.lock().unwrap().clone()
    }
}

impl EmbedderPort for Recording {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        self.batches.lock().unwrap().push(texts.to_vec());
        self.inner.embed_batch(texts)
    }
}
