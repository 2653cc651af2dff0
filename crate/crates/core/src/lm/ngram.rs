use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use super::TokenGenerator;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"EINV-LM\0";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Add-k smoothed word n-gram model with backoff to shorter contexts when a
/// context was never observed.
#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    k: f64,
    vocab: Vocabulary,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// Trains an order-`n` model over whitespace-tokenized, lowercased sentences.
///
/// Every sentence is framed as `BOS w1 .. wm EOS`, and each prediction is
/// counted under all of its contexts of length `0..n`.
pub fn train_ngram<S: AsRef<str>>(corpus: &[S], n: usize, k: f64) -> Result<NGramLm> {
    if n < 1 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config("smoothing constant k must be positive".into()));
    }
    let sentences: Vec<Vec<String>> = corpus
        .iter()
        .map(|s| Vocabulary::split(s.as_ref()).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let vocab = Vocabulary::from_tokens(sentences.iter().flatten());

    let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
    for sentence in &sentences {
        let mut seq = Vec::with_capacity(sentence.len() + 2);
        seq.push(vocab.bos_id());
        seq.extend(sentence.iter().map(|w| vocab.id(w).expect("token in vocab")));
        seq.push(vocab.eos_id());
        for i in 1..seq.len() {
            for len in 0..n.min(i + 1) {
                if len > i {
                    break;
                }
                let entry = counts.entry(seq[i - len..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(seq[i]).or_default() += 1;
            }
        }
    }
    Ok(NGramLm { order: n, k, vocab, counts })
}

impl NGramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Swaps the diversity-filter embeddings of the vocabulary.
    pub fn with_token_embeddings(mut self, embs: Vec<crate::types::Embedding>) -> Result<Self> {
        self.vocab = self.vocab.with_token_embeddings(embs)?;
        Ok(self)
    }

    /// Longest suffix of `context` (at most `order - 1` tokens) that was
    /// observed in training.
    fn resolve<'a>(&'a self, context: &[TokenId]) -> Option<&'a ContextCounts> {
        let max = (self.order - 1).min(context.len());
        (0..=max)
            .rev()
            .find_map(|len| self.counts.get(&context[context.len() - len..]))
    }

    /// Smoothed conditional probability of `token` after `context`.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab.len() as f64;
        match self.resolve(context) {
            Some(c) => {
                let hits = c.next.get(&token).copied().unwrap_or(0) as f64;
                (hits + self.k) / (c.total as f64 + self.k * v)
            }
            None => 1.0 / v,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries: Vec<ModelEntry> = self
            .counts
            .iter()
            .map(|(ctx, c)| ModelEntry {
                context: ctx.clone(),
                next: c.next.iter().map(|(&t, &n)| (t, n)).collect::<BTreeMap<_, _>>().into_iter().collect(),
            })
            .collect();
        entries.sort_by(|a, b| a.context.cmp(&b.context));
        let file = ModelFile {
            order: self.order,
            k: self.k,
            tokens: self.vocab.tokens().to_vec(),
            entries,
        };
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        serde_json::to_writer(&mut out, &file)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MODEL_MAGIC.len();
        if bytes.len() <= header || &bytes[..header] != MODEL_MAGIC {
            return Err(Error::Model("missing EINV-LM header".into()));
        }
        if bytes[header] != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported version {}", bytes[header])));
        }
        let file: ModelFile = serde_json::from_slice(&bytes[header + 1..])?;
        if file.order < 1 || file.k.is_nan() || file.k <= 0.0 {
            return Err(Error::Model("invalid order or smoothing".into()));
        }
        let vocab = Vocabulary::from_tokens(file.tokens.iter().skip(2));
        if vocab.tokens() != file.tokens.as_slice() {
            return Err(Error::Model("vocabulary is not in canonical order".into()));
        }
        let n = vocab.len() as TokenId;
        let mut counts = HashMap::with_capacity(file.entries.len());
        for e in file.entries {
            if e.context.iter().chain(e.next.iter().map(|(t, _)| t)).any(|&t| t >= n) {
                return Err(Error::Model("token id out of range".into()));
            }
            let next: HashMap<_, _> = e.next.into_iter().collect();
            let total = next.values().sum();
            counts.insert(e.context, ContextCounts { total, next });
        }
        Ok(Self { order: file.order, k: file.k, vocab, counts })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

impl TokenGenerator for NGramLm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn log_probs(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        match self.resolve(context) {
            Some(c) => {
                let denom = (c.total as f64 + self.k * v as f64).ln();
                let floor = self.k.ln() - denom;
                let mut out = vec![floor; v];
                for (&t, &hits) in &c.next {
                    out[t as usize] = (hits as f64 + self.k).ln() - denom;
                }
                out
            }
            None => vec![-(v as f64).ln(); v],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    k: f64,
    tokens: Vec<String>,
    entries: Vec<ModelEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}
