use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a real-valued per-iteration query count is turned into an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Nearest,
    Floor,
    Ceil,
}

impl Rounding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Nearest => x.round(),
            Rounding::Floor => x.floor(),
            Rounding::Ceil => x.ceil(),
        }
    }
}

/// Key used to pick which expansions are sent to the victim each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySelection {
    /// Full hybrid score under the previous alignment matrix.
    #[default]
    Score,
    /// Confidence-weighted cosine term alone.
    WeightedCosine,
}

/// Attack hyperparameters.
///
/// Defaults are the published settings: beam 10, 1000 candidate tokens per
/// expansion, 50 base queries decaying by 0.8, diversity threshold 0.9,
/// 32 tokens, ridge 0.1 and a -5 first-token penalty on non-alphabetic tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Candidate tokens kept per expansion.
    pub k_s: usize,
    /// Base number of victim queries per iteration.
    pub k_a: usize,
    /// Beam width.
    pub k_b: usize,
    /// Per-iteration query decay.
    pub gamma: f64,
    /// Diversity filter cosine threshold.
    pub th_w: f64,
    /// Maximum number of generated tokens.
    pub t_max: usize,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Logit offset for non-alphabetic tokens at the first step.
    pub first_step_penalty: f64,
    /// Finished candidates re-verified against the victim at the end.
    pub final_rerank: usize,
    pub seed: u64,
    pub rounding: Rounding,
    pub selection: QuerySelection,
    /// Replace the computed confidence with a constant (ablations).
    pub conf_override: Option<f64>,
    /// Reuse victim embeddings for texts already queried for this target.
    /// Ignored when the victim applies a randomized defense.
    pub memo: bool,
    /// Copy the final alignment matrix into the run report.
    pub dump_alignment: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            k_s: 1000,
            k_a: 50,
            k_b: 10,
            gamma: 0.8,
            th_w: 0.9,
            t_max: 32,
            lambda: 0.1,
            first_step_penalty: -5.0,
            final_rerank: 5,
            seed: 0,
            rounding: Rounding::Nearest,
            selection: QuerySelection::Score,
            conf_override: None,
            memo: true,
            dump_alignment: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(self) -> Result<Self> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0,1)");
        }
        if !(self.th_w > 0.0 && self.th_w <= 1.0) {
            return fail("th_w must lie in (0,1]");
        }
        if self.k_b < 1 {
            return fail("k_b must be at least 1");
        }
        if self.k_b > self.k_s {
            return fail("k_b exceeds k_s");
        }
        if self.t_max < 1 {
            return fail("t_max must be at least 1");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be positive");
        }
        if self.k_a < 1 {
            return fail("k_a must be at least 1");
        }
        if !self.first_step_penalty.is_finite() {
            return fail("first_step_penalty must be finite");
        }
        if let Some(c) = self.conf_override {
            if !(-1.0..=1.0).contains(&c) {
                return fail("conf_override must lie in [-1,1]");
            }
        }
        Ok(self)
    }
}

/// Free-function form of [`AttackConfig::validate`].
pub fn validate_config(cfg: AttackConfig) -> Result<AttackConfig> {
    cfg.validate()
}
