use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EmbedderPort;
use crate::defense::{apply_defense, DefenseSpec};
use crate::error::{Error, Result};
use crate::ledger::{count_tokens, Phase, QueryLedger};
use crate::types::Embedding;

/// The only path to the victim embedder. Applies the configured defense to
/// every returned embedding and charges each successful call to a ledger.
pub struct VictimHandle {
    inner: Arc<dyn EmbedderPort>,
    defense: Option<DefenseSpec>,
    rng: Mutex<ChaCha8Rng>,
    ledger: Arc<Mutex<QueryLedger>>,
    phase: Phase,
}

impl VictimHandle {
    pub fn new(inner: Arc<dyn EmbedderPort>) -> Self {
        Self {
            inner,
            defense: None,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            ledger: Arc::new(Mutex::new(QueryLedger::default())),
            phase: Phase::Online,
        }
    }

    /// Installs a defense; its seed initializes this handle's noise stream.
    pub fn with_defense(mut self, defense: DefenseSpec) -> Result<Self> {
        let defense = defense.validate()?;
        self.rng = Mutex::new(ChaCha8Rng::seed_from_u64(defense.seed));
        self.defense = Some(defense).filter(DefenseSpec::is_randomized);
        Ok(self)
    }

    pub fn with_ledger(mut self, ledger: Arc<Mutex<QueryLedger>>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn defense(&self) -> Option<&DefenseSpec> {
        self.defense.as_ref()
    }

    /// Whether re-querying the same text can return a different vector.
    pub fn is_stochastic(&self) -> bool {
        self.defense.is_some()
    }

    pub fn ledger(&self) -> QueryLedger {
        *self.ledger.lock().expect("ledger lock")
    }

    pub fn shared_ledger(&self) -> Arc<Mutex<QueryLedger>> {
        Arc::clone(&self.ledger)
    }

    /// Queries the victim. The ledger is charged once, and only on success.
    pub fn query(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if texts.is_empty() {
            return Err(Error::Empty("victim query"));
        }
        let raw = self.inner.embed_batch(texts)?;
        if raw.len() != texts.len() {
            return Err(Error::DimensionMismatch { expected: texts.len(), got: raw.len() });
        }
        let out = match &self.defense {
            Some(spec) => {
                let mut rng = self.rng.lock().expect("rng lock");
                raw.iter()
                    .map(|e| apply_defense(spec, e, &mut *rng))
                    .collect::<Result<Vec<_>>>()?
            }
            None => raw,
        };
        let tokens = texts.iter().map(|t| count_tokens(t)).sum();
        self.ledger
            .lock()
            .expect("ledger lock")
            .record(self.phase, texts.len() as u64, tokens);
        Ok(out)
    }
}

/// Free-function form of [`VictimHandle::query`].
pub fn victim_query(h: &VictimHandle, texts: &[String]) -> Result<Vec<Embedding>> {
    h.query(texts)
}
