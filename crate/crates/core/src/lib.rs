//! Training-free black-box embedding inversion.
//!
//! Candidate sentences are grown token by token from a language model, their
//! local embeddings are mapped into the victim's space by a ridge regression
//! that is refit online from a decaying number of victim queries, and every
//! expansion is ranked by a confidence-weighted mix of generator logit and
//! projected cosine similarity to the target.
//!
//! Module map:
//!
//! - [`config`], [`ledger`], [`types`]: shared domain types.
//! - [`lm`]: vocabulary, n-gram generator, logit masking, diversity filter.
//! - [`embed`]: hash embedder, linear victim, accounted victim handle.
//! - [`defense`]: noise and metric-LDP mechanisms applied to victim outputs.
//! - [`align`]: online ridge alignment and the confidence term.
//! - [`search`]: hybrid scoring, query budgeting and the beam loop.
//! - [`metrics`]: BLEU, ROUGE and victim-space cosine.

pub mod align;
pub mod config;
pub mod defense;
pub mod embed;
pub mod error;
pub mod ledger;
pub mod lm;
pub mod metrics;
pub mod search;
pub mod types;

pub use config::{AttackConfig, QuerySelection, Rounding};
pub use error::{Error, Result};
pub use ledger::{Phase, QueryLedger};
pub use types::{cosine, Candidate, Embedding, RunReport};
