mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use embinv_core::align::AlignState;
use embinv_core::embed::{EmbedderPort, HashEmbedder, LinearVictim, VictimHandle};
use embinv_core::lm::train_ngram;
use embinv_core::search::run_attack;
use embinv_core::{AttackConfig, Embedding};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Embedding> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            Embedding::new(v).unwrap().normalized().unwrap()
        })
        .collect()
}

fn stack(es: &[Embedding]) -> DMatrix<f64> {
    DMatrix::from_row_iterator(es.len(), es[0].dim(), es.iter().flat_map(|e| e.values().to_vec()))
}

#[test]
fn solution_minimizes_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (dl, dv, n) = (rng.random_range(2..20), rng.random_range(1..12), rng.random_range(1..60));
        let mut state = AlignState::new(dl, dv, 0.1);
        state.ingest(&unit_rows(&mut rng, n, dl), &unit_rows(&mut rng, n, dv)).unwrap();
        let w = state.solve().unwrap().clone();
        let best = state.objective_offset(&w);
        for _ in 0..20 {
            let scale = 10f64.powi(-rng.random_range(1..6));
            let noise = DMatrix::from_fn(dl, dv, |_, _| rng.random_range(-scale..scale));
            assert!(state.objective_offset(&(&w + noise)) >= best - 1e-12);
        }
    }
}

#[test]
fn gram_and_cross_match_stacked_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (locals, victims) = (unit_rows(&mut rng, 20, 7), unit_rows(&mut rng, 20, 5));
    let mut state = AlignState::new(7, 5, 0.1);
    state.ingest(&locals, &victims).unwrap();
    let (e, v) = (stack(&locals), stack(&victims));
    assert_relative_eq!(state.gram(), &(e.transpose() * &e), epsilon = 1e-12);
    assert_relative_eq!(state.cross(), &(e.transpose() * &v), epsilon = 1e-12);
}

#[test]
fn confidence_stays_high_on_a_linear_victim() {
    let corpus = common::corpus(400, 200, 17);
    let lm = train_ngram(&corpus, 2, 0.1).unwrap();
    let local: Arc<dyn EmbedderPort> = Arc::new(HashEmbedder::new(64, 3, 4));
    let victim: Arc<dyn EmbedderPort> = Arc::new(LinearVictim::random(local.clone(), 48, 6).unwrap());
    let target = victim.embed_batch(&[corpus[0].clone()]).unwrap().remove(0);
    let cfg = AttackConfig { t_max: 4, ..Default::default() };
    let report = run_attack(&target, &lm, &*local, &VictimHandle::new(victim), &cfg).unwrap();
    // 150 pairs after the first step already exceed 2·64
    assert_eq!(report.conf_trace.len(), 4);
    for (t, conf) in report.conf_trace.iter().enumerate().skip(1) {
        assert!(*conf >= 0.95, "conf at step {} = {conf}", t + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn incremental_ingest_matches_stacked(seed in any::<u64>(), dl in 1usize..24, dv in 1usize..16,
                                          n in 1usize..80, cut in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (locals, victims) = (unit_rows(&mut rng, n, dl), unit_rows(&mut rng, n, dv));
        let cut = cut.min(n);
        let mut stacked = AlignState::new(dl, dv, 0.1);
        stacked.ingest(&locals, &victims).unwrap();
        let mut parts = AlignState::new(dl, dv, 0.1);
        if cut > 0 {
            parts.ingest(&locals[..cut], &victims[..cut]).unwrap();
        }
        if cut < n {
            parts.ingest(&locals[cut..], &victims[cut..]).unwrap();
        }
        let diff = (stacked.solve().unwrap().clone() - parts.solve().unwrap()).norm();
        prop_assert!(diff <= 1e-8);
    }
}
