use serde::{Deserialize, Serialize};

/// Which side of the budget a victim call is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Offline,
    Online,
}

/// Sentences and tokens sent to the victim, split by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub offline_sentences: u64,
    pub online_sentences: u64,
    pub offline_tokens: u64,
    pub online_tokens: u64,
}

impl QueryLedger {
    pub fn record(&mut self, phase: Phase, sentences: u64, tokens: u64) {
        match phase {
            Phase::Offline => {
                self.offline_sentences += sentences;
                self.offline_tokens += tokens;
            }
            Phase::Online => {
                self.online_sentences += sentences;
                self.online_tokens += tokens;
            }
        }
    }

    /// Records a batch of queried texts, counting whitespace-delimited tokens.
    pub fn record_texts<S: AsRef<str>>(&mut self, phase: Phase, texts: &[S]) {
        let tokens = texts.iter().map(|t| count_tokens(t.as_ref())).sum();
        self.record(phase, texts.len() as u64, tokens);
    }

    pub fn total_sentences(&self) -> u64 {
        self.offline_sentences + self.online_sentences
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        self.record(Phase::Offline, other.offline_sentences, other.offline_tokens);
        self.record(Phase::Online, other.online_sentences, other.online_tokens);
    }
}

/// Functional form: returns the ledger after recording.
pub fn ledger_record(mut ledger: QueryLedger, phase: Phase, sentences: u64, tokens: u64) -> QueryLedger {
    ledger.record(phase, sentences, tokens);
    ledger
}

pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
