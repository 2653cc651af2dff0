//! Dataset-level attack runs and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, ensure, Context};
use embinv_core::defense::{DefenseKind, DefenseSpec};
use embinv_core::embed::{EmbedderPort, HashEmbedder, LinearVictim, VictimHandle};
use embinv_core::lm::{train_ngram, NGramLm, MODEL_MAGIC};
use embinv_core::metrics::{cos_metric, text_metrics, COS};
use embinv_core::search::run_attack;
use embinv_core::{AttackConfig, QueryLedger, RunReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::remote::{RemoteConfig, RemoteEmbedder};

pub const SUMMARY_HEADER: &str =
    "victim,defense,eps_per_dim,BLEU-1,BLEU-2,ROUGE-L,ROUGE-1,COS,online_sentences,online_tokens";
const METRIC_COLUMNS: [&str; 5] = ["BLEU-1", "BLEU-2", "ROUGE-L", "ROUGE-1", "COS"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VictimSpec {
    /// Hash embedder used directly (unit-norm outputs).
    Hash { embedder: HashEmbedder },
    /// Seeded linear image of a hash embedder.
    Linear {
        base: HashEmbedder,
        dim: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        normalize: bool,
    },
    Remote(RemoteConfig),
}

impl Default for VictimSpec {
    fn default() -> Self {
        VictimSpec::Linear { base: HashEmbedder::new(256, 3, 0xb1c7), dim: 192, seed: 0x3a9, normalize: false }
    }
}

impl VictimSpec {
    pub fn name(&self) -> &'static str {
        match self {
            VictimSpec::Hash { .. } => "hash",
            VictimSpec::Linear { .. } => "linear",
            VictimSpec::Remote(_) => "remote",
        }
    }

    pub fn build(&self) -> anyhow::Result<Arc<dyn EmbedderPort>> {
        Ok(match self {
            VictimSpec::Hash { embedder } => Arc::new(*embedder),
            VictimSpec::Linear { base, dim, seed, normalize } => {
                Arc::new(LinearVictim::random(Arc::new(*base), *dim, *seed)?.normalized(*normalize))
            }
            VictimSpec::Remote(cfg) => Arc::new(
                RemoteEmbedder::connect(cfg).with_context(|| format!("connecting to {}", cfg.url))?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Target sentences, one per line.
    pub dataset: Option<PathBuf>,
    /// Generator training corpus (one sentence per line) or a saved model.
    pub corpus: Option<PathBuf>,
    pub lm_order: usize,
    pub lm_k: f64,
    pub attack: AttackConfig,
    pub victim: VictimSpec,
    pub defense: DefenseSpec,
    pub local: HashEmbedder,
    pub samples: usize,
    pub report_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub seed: u64,
    /// Attack targets concurrently.
    pub parallel: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: None,
            corpus: None,
            lm_order: 2,
            lm_k: 0.1,
            attack: AttackConfig::default(),
            victim: VictimSpec::default(),
            defense: DefenseSpec::none(),
            local: HashEmbedder::new(256, 3, 0x10ca1),
            samples: 200,
            report_path: None,
            summary_path: None,
            seed: 0,
            parallel: true,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (what, path) in [("dataset", &self.dataset), ("corpus", &self.corpus)] {
            match path {
                Some(p) => ensure!(p.is_file(), "{what} file {} does not exist", p.display()),
                None => bail!("no {what} file given"),
            }
        }
        self.attack.clone().validate()?;
        self.defense.validate()?;
        ensure!(self.lm_order >= 1, "lm_order must be at least 1");
        ensure!(self.lm_k > 0.0, "lm_k must be positive");
        Ok(())
    }
}

/// Outcome for one target: a report, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetOutcome {
    Ok(RunReport),
    Failed { target_id: String, error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub victim: String,
    pub defense: DefenseKind,
    pub eps_per_dim: Option<f64>,
    /// Means over successful targets.
    pub metrics: BTreeMap<String, f64>,
    /// Sum of the per-target attack ledgers.
    pub ledger: QueryLedger,
    /// Victim calls spent embedding the targets themselves.
    pub setup_ledger: QueryLedger,
    /// Victim calls spent on the COS metric.
    pub eval_ledger: QueryLedger,
    pub succeeded: usize,
    pub failed: usize,
}

impl Summary {
    /// Header plus one data row; header only when no target succeeded.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        if self.succeeded == 0 {
            return out;
        }
        let eps = self.eps_per_dim.map(|e| format!("{e:.4}")).unwrap_or_default();
        let _ = write!(out, "{},{},{}", self.victim, self.defense.name(), eps);
        for col in METRIC_COLUMNS {
            let _ = write!(out, ",{:.4}", self.metrics.get(col).copied().unwrap_or(f64::NAN));
        }
        let _ = writeln!(
            out,
            ",{:.4},{:.4}",
            self.ledger.online_sentences as f64, self.ledger.online_tokens as f64
        );
        out
    }
}

pub struct ExperimentOutput {
    pub outcomes: Vec<TargetOutcome>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn reports(&self) -> impl Iterator<Item = &RunReport> {
        self.outcomes.iter().filter_map(|o| match o {
            TargetOutcome::Ok(r) => Some(r),
            TargetOutcome::Failed { .. } => None,
        })
    }

    pub fn to_jsonl(&self) -> anyhow::Result<String> {
        let mut out = String::new();
        for o in &self.outcomes {
            out.push_str(&serde_json::to_string(o)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes whichever of the report and summary paths are set.
    pub fn write(&self, spec: &ExperimentSpec) -> anyhow::Result<()> {
        if let Some(p) = &spec.report_path {
            std::fs::write(p, self.to_jsonl()?).with_context(|| format!("writing {}", p.display()))?;
        }
        if let Some(p) = &spec.summary_path {
            std::fs::write(p, self.summary.to_csv()).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    }
}

/// Non-empty trimmed lines of a UTF-8 file.
pub fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Loads a saved model when the file carries the model header, otherwise
/// trains one on the file's lines.
pub fn load_generator(path: &Path, order: usize, k: f64) -> anyhow::Result<NGramLm> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MODEL_MAGIC) {
        return Ok(NGramLm::from_bytes(&bytes)?);
    }
    let text = String::from_utf8(bytes).context("corpus is not UTF-8")?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    Ok(train_ngram(&lines, order, k)?)
}

/// First `n` items of a seeded shuffle, with their original indices.
pub fn sample_targets(lines: &[String], n: usize, seed: u64) -> Vec<(usize, String)> {
    let mut idx: Vec<usize> = (0..lines.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.into_iter().take(n).map(|i| (i, lines[i].clone())).collect()
}

fn stream_seed(base: u64, target: usize, stream: u64) -> u64 {
    base ^ (target as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// Runs the attack on every sampled target of the dataset.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<ExperimentOutput> {
    spec.validate()?;
    let lines = read_lines(spec.dataset.as_deref().expect("validated"))?;
    ensure!(
        spec.samples <= lines.len(),
        "sample count {} exceeds dataset size {}",
        spec.samples,
        lines.len()
    );
    let targets = sample_targets(&lines, spec.samples, spec.seed);
    let lm = load_generator(spec.corpus.as_deref().expect("validated"), spec.lm_order, spec.lm_k)?;
    let victim = spec.victim.build()?;
    let local: Arc<dyn EmbedderPort> = Arc::new(spec.local);
    let world = World { lm: &lm, local, victim };
    run_targets(spec, &world, &targets)
}

/// Pre-built backends for [`run_targets`].
pub struct World<'a> {
    pub lm: &'a NGramLm,
    pub local: Arc<dyn EmbedderPort>,
    pub victim: Arc<dyn EmbedderPort>,
}

/// Attacks `targets` (id, text) against `world` with the spec's attack,
/// defense and seed settings. Files are not read or written.
pub fn run_targets(
    spec: &ExperimentSpec,
    world: &World<'_>,
    targets: &[(usize, String)],
) -> anyhow::Result<ExperimentOutput> {
    let cfg = spec.attack.clone().validate()?;
    let setup = Arc::new(Mutex::new(QueryLedger::default()));
    let eval = Arc::new(Mutex::new(QueryLedger::default()));

    let attack_one = |(id, text): &(usize, String)| -> anyhow::Result<RunReport> {
        let defended = |stream| -> anyhow::Result<VictimHandle> {
            let defense = DefenseSpec { seed: stream_seed(spec.defense.seed, *id, stream), ..spec.defense };
            Ok(VictimHandle::new(world.victim.clone()).with_defense(defense)?)
        };
        let provision = defended(1)?.with_ledger(setup.clone());
        let target = provision.query(std::slice::from_ref(text))?.remove(0);

        let attacker = defended(2)?;
        let mut report = run_attack(&target, world.lm, &*world.local, &attacker, &cfg)?;

        // scored against the undefended victim and the clean target
        let judge = VictimHandle::new(world.victim.clone()).with_ledger(eval.clone());
        let clean = if provision.is_stochastic() {
            judge.query(std::slice::from_ref(text))?.remove(0)
        } else {
            target
        };
        report.metrics.insert(COS.to_string(), cos_metric(&report.reconstruction, &clean, &judge)?);
        for (name, value) in text_metrics(&report.reconstruction, text) {
            report.metrics.insert(name.to_string(), value);
        }
        report.target_id = id.to_string();
        report.reference = Some(text.clone());
        Ok(report)
    };

    let results: Vec<anyhow::Result<RunReport>> = if spec.parallel {
        targets.par_iter().map(attack_one).collect()
    } else {
        targets.iter().map(attack_one).collect()
    };

    let mut outcomes = Vec::with_capacity(results.len());
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut ledger = QueryLedger::default();
    let (mut succeeded, mut failed) = (0, 0);
    for ((id, _), result) in targets.iter().zip(results) {
        match result {
            Ok(report) => {
                for (k, v) in &report.metrics {
                    *sums.entry(k.clone()).or_default() += v;
                }
                ledger.merge(&report.ledger);
                succeeded += 1;
                outcomes.push(TargetOutcome::Ok(report));
            }
            Err(e) => {
                failed += 1;
                tracing::warn!(target_id = id, error = %e, "target failed");
                outcomes.push(TargetOutcome::Failed { target_id: id.to_string(), error: format!("{e:#}") });
            }
        }
    }
    if failed > 0 {
        tracing::warn!(failed, "targets excluded from the summary");
    }
    let metrics = sums.into_iter().map(|(k, v)| (k, v / succeeded.max(1) as f64)).collect();
    let directional = matches!(spec.defense.kind, DefenseKind::LapMech | DefenseKind::PurMech);
    let summary = Summary {
        victim: spec.victim.name().to_string(),
        defense: spec.defense.kind,
        eps_per_dim: spec.defense.eps_per_dim.filter(|_| directional),
        metrics,
        ledger,
        setup_ledger: *setup.lock().expect("ledger lock"),
        eval_ledger: *eval.lock().expect("ledger lock"),
        succeeded,
        failed,
    };
    Ok(ExperimentOutput { outcomes, summary })
}
