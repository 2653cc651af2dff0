use std::collections::{BTreeMap, HashMap, HashSet};

use crate::align::AlignState;
use crate::config::{AttackConfig, QuerySelection};
use crate::embed::{EmbedderPort, VictimHandle};
use crate::error::{Error, Result};
use crate::lm::{diversity_filter, next_token_logits, ranked_ids, TokenGenerator, TokenId};
use crate::types::{cosine, Candidate, Embedding, RunReport};

use super::score::{query_count, score_candidates, z_score};

/// Search state for one target.
#[derive(Debug, Clone)]
pub struct BeamState {
    /// Completed steps.
    pub iteration: usize,
    pub live: Vec<Candidate>,
    pub finished: Vec<Candidate>,
    pub align: AlignState,
    /// Victim embeddings already obtained for this target, keyed by text.
    memo: HashMap<String, Embedding>,
}

impl BeamState {
    /// A single empty candidate (the BOS context) and a fresh alignment.
    pub fn new(local: &dyn EmbedderPort, d_victim: usize, lambda: f64) -> Result<Self> {
        let root = Candidate {
            tokens: Vec::new(),
            text: String::new(),
            last_logit: 0.0,
            local_emb: local.embed_batch(&[String::new()])?.remove(0),
            projected_emb: None,
            score: 0.0,
            finished: false,
        };
        Ok(Self {
            iteration: 0,
            live: vec![root],
            finished: Vec::new(),
            align: AlignState::new(local.dim(), d_victim, lambda),
            memo: HashMap::new(),
        })
    }

    /// Confidence used to weight the cosine term this round.
    fn scoring_conf(&self, cfg: &AttackConfig) -> f64 {
        cfg.conf_override
            .or_else(|| self.align.conf_history().last().copied())
            .unwrap_or(0.0)
    }
}

struct Expansion {
    parent: usize,
    token: TokenId,
    text: String,
    logit: f64,
    eos: bool,
}

/// Advances the beam by one token.
///
/// Expands every live candidate through the masked generator and the
/// diversity filter, ranks the expansions with the previous alignment, sends
/// the top `query_count(t)` not-yet-verified texts to the victim, refits the
/// alignment, re-scores all expansions (verified ones with their true victim
/// embedding, the rest through the new projection) and keeps the top `k_b`.
/// On error nothing in `state` changes.
pub fn beam_step(
    state: &mut BeamState,
    target: &Embedding,
    generator: &dyn TokenGenerator,
    local: &dyn EmbedderPort,
    victim: &VictimHandle,
    cfg: &AttackConfig,
) -> Result<()> {
    if state.live.is_empty() {
        return Err(Error::Empty("live beam"));
    }
    if target.dim() != state.align.d_victim() {
        return Err(Error::DimensionMismatch { expected: state.align.d_victim(), got: target.dim() });
    }
    let t = state.iteration + 1;
    let vocab = generator.vocab();
    let use_memo = cfg.memo && !victim.is_stochastic();

    // 1. expand
    let mut expansions = Vec::new();
    for (parent, cand) in state.live.iter().enumerate() {
        let mut context = Vec::with_capacity(cand.tokens.len() + 1);
        context.push(vocab.bos_id());
        context.extend_from_slice(&cand.tokens);
        let mut logits = next_token_logits(generator, &context, t, cfg);
        if cand.tokens.is_empty() {
            // an immediate EOS would reconstruct the empty string
            logits[vocab.eos_id() as usize] = f64::NEG_INFINITY;
        }
        let ranked = ranked_ids(&logits);
        if ranked.is_empty() {
            continue;
        }
        for token in diversity_filter(&ranked, vocab, cfg.th_w, cfg.k_s)? {
            let eos = token == vocab.eos_id();
            let text = if eos {
                cand.text.clone()
            } else if cand.text.is_empty() {
                vocab.token(token).to_string()
            } else {
                format!("{} {}", cand.text, vocab.token(token))
            };
            expansions.push(Expansion { parent, token, text, logit: logits[token as usize], eos });
        }
    }
    if expansions.is_empty() {
        return Err(Error::Empty("expansions"));
    }

    let fresh: Vec<String> = expansions.iter().filter(|x| !x.eos).map(|x| x.text.clone()).collect();
    let mut fresh_embs = if fresh.is_empty() { Vec::new() } else { local.embed_batch(&fresh)? }.into_iter();
    let local_embs: Vec<Embedding> = expansions
        .iter()
        .map(|x| {
            if x.eos {
                state.live[x.parent].local_emb.clone()
            } else {
                fresh_embs.next().expect("one local embedding per text")
            }
        })
        .collect();
    let logits: Vec<f64> = expansions.iter().map(|x| x.logit).collect();

    // 2-4. rank with the stale alignment and pick the verification group
    let prior_conf = state.scoring_conf(cfg);
    let key = match state.align.w() {
        None => logits.clone(),
        Some(_) => {
            let projected = state.align.project_batch(&local_embs)?;
            let cosines: Vec<f64> = projected.iter().map(|p| p.cosine(target)).collect();
            match cfg.selection {
                QuerySelection::Score => score_candidates(&logits, &cosines, prior_conf)?,
                QuerySelection::WeightedCosine => {
                    z_score(&cosines).into_iter().map(|c| prior_conf * c).collect()
                }
            }
        }
    };
    let order = descending(&key);
    let mut seen = HashSet::new();
    let candidates: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| !(use_memo && state.memo.contains_key(&expansions[i].text)))
        .filter(|&i| seen.insert(expansions[i].text.as_str()))
        .collect();
    let group = &candidates[..query_count(t, cfg, candidates.len())];

    // 5. verify
    let mut align = state.align.clone();
    let mut verified: HashMap<usize, Embedding> = HashMap::new();
    if !group.is_empty() {
        let texts: Vec<String> = group.iter().map(|&i| expansions[i].text.clone()).collect();
        let truth = victim.query(&texts)?;
        // 6. refit
        let locals: Vec<Embedding> = group.iter().map(|&i| local_embs[i].clone()).collect();
        align.update(&locals, &truth)?;
        verified.extend(group.iter().copied().zip(truth));
    } else {
        align.carry_forward();
    }

    // 7. re-project what was not verified
    let conf = cfg.conf_override.unwrap_or_else(|| *align.conf_history().last().expect("conf recorded"));
    let projected = align.project_batch(&local_embs)?;
    let by_text: HashMap<&str, &Embedding> = verified.iter().map(|(&i, e)| (expansions[i].text.as_str(), e)).collect();
    let victim_space: Vec<Embedding> = projected
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let text = expansions[i].text.as_str();
            if let Some(e) = by_text.get(text) {
                (*e).clone()
            } else if use_memo {
                state.memo.get(text).cloned().unwrap_or(p)
            } else {
                p
            }
        })
        .collect();

    // 8. re-score everything
    let cosines: Vec<f64> = victim_space.iter().map(|e| cosine(e.values(), target.values())).collect();
    let scores = score_candidates(&logits, &cosines, conf)?;

    // 9. keep the best k_b
    let mut next_live = Vec::new();
    let mut newly_finished = Vec::new();
    let mut local_embs: Vec<Option<Embedding>> = local_embs.into_iter().map(Some).collect();
    let mut victim_space: Vec<Option<Embedding>> = victim_space.into_iter().map(Some).collect();
    for i in descending(&scores).into_iter().take(cfg.k_b) {
        let x = &expansions[i];
        let mut tokens = state.live[x.parent].tokens.clone();
        tokens.push(x.token);
        let cand = Candidate {
            tokens,
            text: x.text.clone(),
            last_logit: x.logit,
            local_emb: local_embs[i].take().expect("taken once"),
            projected_emb: victim_space[i].take(),
            score: scores[i],
            finished: x.eos,
        };
        if cand.finished || t >= cfg.t_max {
            newly_finished.push(cand);
        } else {
            next_live.push(cand);
        }
    }

    if use_memo {
        for (i, e) in verified {
            state.memo.insert(expansions[i].text.clone(), e);
        }
    }
    state.align = align;
    state.live = next_live;
    state.finished.extend(newly_finished);
    state.iteration = t;
    Ok(())
}

/// Indices sorted by descending value, ties broken by index.
fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Inverts `target` and returns the report for this run.
///
/// Steps until every beam has finished or `t_max` tokens were generated.
/// The answer is chosen among the `final_rerank` finished candidates whose
/// projection is closest to the target, by true victim cosine; those checks
/// are charged to the ledger like any other query. `target_id` and
/// `metrics` are left for the caller.
pub fn run_attack(
    target: &Embedding,
    generator: &dyn TokenGenerator,
    local: &dyn EmbedderPort,
    victim: &VictimHandle,
    cfg: &AttackConfig,
) -> Result<RunReport> {
    let cfg = cfg.clone().validate()?;
    let start = victim.ledger();
    let mut state = BeamState::new(local, victim.dim(), cfg.lambda)?;
    while !state.live.is_empty() && state.iteration < cfg.t_max {
        beam_step(&mut state, target, generator, local, victim, &cfg)?;
    }

    let reconstruction = if state.finished.is_empty() {
        state
            .live
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .map(|c| c.text.clone())
            .unwrap_or_default()
    } else {
        final_choice(&state, target, victim, &cfg)?
    };

    let end = victim.ledger();
    let ledger = crate::ledger::QueryLedger {
        offline_sentences: end.offline_sentences - start.offline_sentences,
        online_sentences: end.online_sentences - start.online_sentences,
        offline_tokens: end.offline_tokens - start.offline_tokens,
        online_tokens: end.online_tokens - start.online_tokens,
    };
    let alignment = cfg.dump_alignment.then(|| {
        state
            .align
            .w()
            .map(|w| w.row_iter().map(|r| r.iter().copied().collect()).collect())
    }).flatten();
    Ok(RunReport {
        target_id: String::new(),
        reference: None,
        reconstruction,
        metrics: BTreeMap::new(),
        ledger,
        conf_trace: state.align.conf_history().to_vec(),
        iterations_used: state.iteration,
        alignment,
    })
}

fn final_choice(state: &BeamState, target: &Embedding, victim: &VictimHandle, cfg: &AttackConfig) -> Result<String> {
    let locals: Vec<Embedding> = state.finished.iter().map(|c| c.local_emb.clone()).collect();
    let projected = state.align.project_batch(&locals)?;
    let proj_cos: Vec<f64> = projected.iter().map(|p| p.cosine(target)).collect();
    let mut seen = HashSet::new();
    let shortlist: Vec<&str> = descending(&proj_cos)
        .into_iter()
        .map(|i| state.finished[i].text.as_str())
        .filter(|t| seen.insert(*t))
        .take(cfg.final_rerank.max(1))
        .collect();
    if cfg.final_rerank == 0 {
        return Ok(shortlist[0].to_string());
    }
    let texts: Vec<String> = shortlist.iter().map(|s| s.to_string()).collect();
    let truth = victim.query(&texts)?;
    let best = truth
        .iter()
        .map(|e| e.cosine(target))
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("non-empty shortlist");
    Ok(texts[best].clone())
}
