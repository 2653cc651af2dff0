//! Sentence-level reconstruction metrics on a 0–100 scale, plus cosine in
//! the victim's embedding space.
//!
//! Tokens are maximal runs of alphanumeric characters after lowercasing.
//! BLEU is unsmoothed: any zero n-gram precision gives 0.

use std::collections::HashMap;

use crate::embed::VictimHandle;
use crate::error::Result;
use crate::types::Embedding;

pub const BLEU_1: &str = "BLEU-1";
pub const BLEU_2: &str = "BLEU-2";
pub const ROUGE_L: &str = "ROUGE-L";
pub const ROUGE_1: &str = "ROUGE-1";
pub const COS: &str = "COS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RougeVariant {
    One,
    Lcs,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total.
fn clipped_matches(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.len().saturating_sub(n - 1))
}

/// Cumulative BLEU-`n`: brevity penalty times the geometric mean of the
/// clipped 1..=n-gram precisions, ×100.
pub fn bleu_n(candidate: &str, reference: &str, n: usize) -> f64 {
    assert!(n >= 1, "BLEU order must be positive");
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (matched, total) = clipped_matches(&cand, &refs, k);
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let (c, r) = (cand.len() as f64, refs.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (100.0 * bp * (log_sum / n as f64).exp()).clamp(0.0, 100.0)
}

/// ROUGE F1 ×100: unigram overlap for [`RougeVariant::One`], longest common
/// subsequence for [`RougeVariant::Lcs`].
pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant) -> f64 {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let overlap = match variant {
        RougeVariant::One => clipped_matches(&cand, &refs, 1).0,
        RougeVariant::Lcs => lcs_len(&cand, &refs),
    };
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand.len() as f64;
    let r = overlap as f64 / refs.len() as f64;
    (100.0 * 2.0 * p * r / (p + r)).clamp(0.0, 100.0)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Cosine between the victim's embedding of `reconstruction` and `target`.
/// The query is charged to the handle's ledger.
pub fn cos_metric(reconstruction: &str, target: &Embedding, victim: &VictimHandle) -> Result<f64> {
    let e = victim.query(&[reconstruction.to_string()])?.remove(0);
    Ok(e.cosine(target))
}

/// The four text metrics keyed by their report names.
pub fn text_metrics(candidate: &str, reference: &str) -> [(&'static str, f64); 4] {
    [
        (BLEU_1, bleu_n(candidate, reference, 1)),
        (BLEU_2, bleu_n(candidate, reference, 2)),
        (ROUGE_L, rouge(candidate, reference, RougeVariant::Lcs)),
        (ROUGE_1, rouge(candidate, reference, RougeVariant::One)),
    ]
}
