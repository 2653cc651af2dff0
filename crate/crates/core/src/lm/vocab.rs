use std::collections::HashMap;

use crate::embed::HashEmbedder;
use crate::error::{Error, Result};
use crate::types::Embedding;

pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Dimension of the per-token embeddings used by the diversity filter.
pub const TOKEN_EMB_DIM: usize = 64;
const TOKEN_EMB_SEED: u64 = 0x746f_6b65_6e73;

/// Word-level vocabulary. BOS is id 0 and EOS id 1.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    is_ascii: Vec<bool>,
    is_alphabetic: Vec<bool>,
    token_emb: Vec<Embedding>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-seen order; duplicates and
    /// the reserved BOS/EOS strings are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = vec![BOS.to_string(), EOS.to_string()];
        let mut ids: HashMap<String, TokenId> = list
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        for tok in tokens {
            let tok = tok.as_ref();
            if !ids.contains_key(tok) {
                ids.insert(tok.to_string(), list.len() as TokenId);
                list.push(tok.to_string());
            }
        }
        let embedder = HashEmbedder::new(TOKEN_EMB_DIM, 3, TOKEN_EMB_SEED);
        let is_ascii = list.iter().map(|t| t.is_ascii()).collect();
        let is_alphabetic = list
            .iter()
            .map(|t| !t.is_empty() && t.chars().all(char::is_alphabetic))
            .collect();
        let token_emb = list.iter().map(|t| embedder.embed(t)).collect();
        Self { tokens: list, ids, is_ascii, is_alphabetic, token_emb }
    }

    /// Replaces the diversity-filter embeddings. Rows must be unit-norm and
    /// share one dimension.
    pub fn with_token_embeddings(mut self, embs: Vec<Embedding>) -> Result<Self> {
        if embs.len() != self.tokens.len() {
            return Err(Error::DimensionMismatch { expected: self.tokens.len(), got: embs.len() });
        }
        let dim = embs[0].dim();
        for e in &embs {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.dim() });
            }
            if (e.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Config("token embeddings must be unit-norm".into()));
            }
        }
        self.token_emb = embs;
        Ok(self)
    }

    /// Lowercased whitespace split, the tokenization used for corpora.
    pub fn split(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split_whitespace().map(str::to_lowercase)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos_id(&self) -> TokenId {
        0
    }

    pub fn eos_id(&self) -> TokenId {
        1
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_ascii(&self, id: TokenId) -> bool {
        self.is_ascii[id as usize]
    }

    pub fn is_alphabetic(&self, id: TokenId) -> bool {
        self.is_alphabetic[id as usize]
    }

    pub fn token_emb(&self, id: TokenId) -> &Embedding {
        &self.token_emb[id as usize]
    }

    /// Space-joined surface form; BOS and EOS are dropped.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.bos_id() || id == self.eos_id() {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(self.token(id));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_a_bijection() {
        let v = Vocabulary::from_tokens(["b", "a", "b", "<s>", "c"]);
        assert_eq!(v.len(), 5);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as TokenId));
        }
        assert_eq!(v.token(v.bos_id()), BOS);
        assert_eq!(v.token(v.eos_id()), EOS);
        assert_eq!(v.tokens().iter().filter(|t| *t == BOS).count(), 1);
    }

    #[test]
    fn masks_and_embeddings() {
        let v = Vocabulary::from_tokens(["word", "naïve", "###", "it's"]);
        let id = |t| v.id(t).unwrap();
        assert!(v.is_alphabetic(id("word")) && v.is_ascii(id("word")));
        assert!(!v.is_ascii(id("naïve")));
        assert!(!v.is_alphabetic(id("###")));
        assert!(!v.is_alphabetic(id("it's")));
        assert!(!v.is_alphabetic(v.eos_id()));
        for i in 0..v.len() as TokenId {
            let e = v.token_emb(i);
            assert_eq!(e.dim(), TOKEN_EMB_DIM);
            assert!((e.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn detokenize_skips_markers() {
        let v = Vocabulary::from_tokens(["hello", "world"]);
        let ids = [v.bos_id(), v.id("hello").unwrap(), v.id("world").unwrap(), v.eos_id()];
        assert_eq!(v.detokenize(&ids), "hello world");
    }
}
