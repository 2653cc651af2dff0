mod common;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use common::{corpus, Recording};
use embinv_core::align::FIRST_STEP_CONF_FACTOR;
use embinv_core::embed::{EmbedderPort, HashEmbedder, LinearVictim, VictimHandle};
use embinv_core::lm::{train_ngram, NGramLm, TokenGenerator};
use embinv_core::search::{beam_step, query_count, run_attack, BeamState};
use embinv_core::{cosine, AttackConfig, Embedding};
use nalgebra::DMatrix;

struct Setup {
    lm: NGramLm,
    local: Arc<dyn EmbedderPort>,
    victim: Arc<Recording>,
}

fn setup() -> Setup {
    let lm = train_ngram(&corpus(300, 60, 3), 2, 0.1).unwrap();
    let local: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(96, 3, 1));
    let base: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(96, 3, 2));
    let victim = Recording::new(Arc::new(LinearVictim::random(base, 64, 5).unwrap()));
    Setup { lm, local, victim }
}

fn small_cfg() -> AttackConfig {
    AttackConfig { k_a: 5, k_b: 4, t_max: 6, ..Default::default() }
}

fn target(s: &Setup, text: &str) -> Embedding {
    s.victim.inner.embed_batch(&[text.to_string()]).unwrap().remove(0)
}

fn stack(es: &[Embedding]) -> DMatrix<f64> {
    DMatrix::from_row_iterator(es.len(), es[0].dim(), es.iter().flat_map(|e| e.values().to_vec()))
}

#[test]
fn first_step_queries_three_k_a_and_scales_confidence() {
    let s = setup();
    let cfg = small_cfg();
    let handle = VictimHandle::new(s.victim.clone());
    let e_v = target(&s, "kakaka kalolo kamimi");
    let mut state = BeamState::new(&*s.local, handle.dim(), cfg.lambda).unwrap();
    beam_step(&mut state, &e_v, &s.lm, &*s.local, &handle, &cfg).unwrap();

    assert_eq!(handle.ledger().online_sentences, 15);
    let batches = s.victim.batches();
    assert_eq!(batches.len(), 1);
    let texts = &batches[0];

    // independent ridge fit on exactly the queried pairs
    let e = stack(&s.local.embed_batch(texts).unwrap());
    let v = stack(&s.victim.inner.embed_batch(texts).unwrap());
    let lhs = e.transpose() * &e + DMatrix::identity(e.ncols(), e.ncols()) * cfg.lambda;
    let w = lhs.lu().solve(&(e.transpose() * &v)).unwrap();
    let fitted = &e * &w;
    let in_sample = (0..texts.len())
        .map(|i| {
            let p: Vec<f64> = fitted.row(i).iter().copied().collect();
            let t: Vec<f64> = v.row(i).iter().copied().collect();
            cosine(&p, &t)
        })
        .sum::<f64>()
        / texts.len() as f64;
    assert_abs_diff_eq!(state.align.conf_history()[0], FIRST_STEP_CONF_FACTOR * in_sample, epsilon = 1e-9);
    assert_abs_diff_eq!((state.align.w().unwrap() - w).norm(), 0.0, epsilon = 1e-8);
}

#[test]
fn single_beam_keeps_the_matching_token() {
    let lm = train_ngram(&["a", "b"], 2, 0.5).unwrap();
    let basis: Vec<Embedding> = (0..lm.vocab().len()).map(|i| Embedding::basis(64, i)).collect();
    let lm = lm.with_token_embeddings(basis).unwrap();
    let local: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(32, 3, 1));
    let base: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(32, 3, 2));
    let victim: Arc<dyn EmbedderPort> = Arc::new(LinearVictim::random(base, 16, 9).unwrap());
    let cfg = AttackConfig { k_b: 1, k_s: 2, ..Default::default() };

    for (wanted, other) in [("a", "b"), ("b", "a")] {
        let e_v = victim.embed_batch(&[wanted.to_string()]).unwrap().remove(0);
        // the oracle: equal logits, so the truer victim cosine must win
        let truth = victim.embed_batch(&[wanted.to_string(), other.to_string()]).unwrap();
        assert!(truth[0].cosine(&e_v) > truth[1].cosine(&e_v));

        let handle = VictimHandle::new(victim.clone());
        let mut state = BeamState::new(&*local, 16, cfg.lambda).unwrap();
        beam_step(&mut state, &e_v, &lm, &*local, &handle, &cfg).unwrap();
        assert_eq!(state.live.len(), 1);
        assert_eq!(state.live[0].text, wanted);
    }
}

#[test]
fn ledger_matches_schedule_step_by_step() {
    let s = setup();
    let cfg = small_cfg();
    let handle = VictimHandle::new(s.victim.clone());
    let e_v = target(&s, "kakaka kalolo kamimi kaneka");
    let mut state = BeamState::new(&*s.local, handle.dim(), cfg.lambda).unwrap();
    let mut expected = 0u64;
    while !state.live.is_empty() && state.iteration < cfg.t_max {
        beam_step(&mut state, &e_v, &s.lm, &*s.local, &handle, &cfg).unwrap();
        expected += query_count(state.iteration, &cfg, usize::MAX) as u64;
        assert_eq!(handle.ledger().online_sentences, expected, "after step {}", state.iteration);
    }
    let sent: usize = s.victim.batches().iter().map(Vec::len).sum();
    assert_eq!(sent as u64, expected);
}

#[test]
fn beam_width_bound_and_finished_are_immutable() {
    let s = setup();
    let cfg = AttackConfig { t_max: 8, ..small_cfg() };
    let handle = VictimHandle::new(s.victim.clone());
    let e_v = target(&s, "kalolo kamimi");
    let mut state = BeamState::new(&*s.local, handle.dim(), cfg.lambda).unwrap();
    let mut snapshot: Vec<(String, f64)> = Vec::new();
    while !state.live.is_empty() && state.iteration < cfg.t_max {
        beam_step(&mut state, &e_v, &s.lm, &*s.local, &handle, &cfg).unwrap();
        assert!(state.live.len() + state.finished.len() - snapshot.len() <= cfg.k_b);
        assert!(state.live.iter().all(|c| !c.finished && c.tokens.len() == state.iteration));
        let now: Vec<(String, f64)> = state.finished.iter().map(|c| (c.text.clone(), c.score)).collect();
        assert_eq!(&now[..snapshot.len()], &snapshot[..]);
        snapshot = now;
    }
    assert!(state.live.is_empty());
}

#[test]
fn single_iteration_yields_one_token() {
    let s = setup();
    let cfg = AttackConfig { t_max: 1, k_b: 10, ..small_cfg() };
    let handle = VictimHandle::new(s.victim.clone());
    let report = run_attack(&target(&s, "kakaka kalolo"), &s.lm, &*s.local, &handle, &cfg).unwrap();
    assert_eq!(report.reconstruction.split_whitespace().count(), 1);
    assert_eq!(report.iterations_used, 1);
    assert_eq!(report.ledger.online_sentences, 15 + cfg.final_rerank as u64);
}

#[test]
fn attack_is_deterministic() {
    let s = setup();
    let cfg = small_cfg();
    let e_v = target(&s, "kakaka kalolo kamimi");
    let run = || {
        let handle = VictimHandle::new(s.victim.clone());
        serde_json::to_string(&run_attack(&e_v, &s.lm, &*s.local, &handle, &cfg).unwrap()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn victim_failure_leaves_state_untouched() {
    struct Broken;
    impl EmbedderPort for Broken {
        fn dim(&self) -> usize {
            64
        }
        fn embed_batch(&self, _: &[String]) -> embinv_core::Result<Vec<Embedding>> {
            Err(embinv_core::Error::Model("offline".into()))
        }
    }
    let s = setup();
    let cfg = small_cfg();
    let handle = VictimHandle::new(Arc::new(Broken));
    let e_v = target(&s, "kakaka");
    let mut state = BeamState::new(&*s.local, 64, cfg.lambda).unwrap();
    let before = (state.iteration, state.live.len(), state.align.n_pairs());
    assert!(beam_step(&mut state, &e_v, &s.lm, &*s.local, &handle, &cfg).is_err());
    assert_eq!((state.iteration, state.live.len(), state.align.n_pairs()), before);
    assert_eq!(handle.ledger().total_sentences(), 0);
    assert!(s.lm.vocab().len() > 60);
}
