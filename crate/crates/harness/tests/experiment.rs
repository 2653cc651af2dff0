use std::sync::Arc;

use embinv_core::defense::DefenseSpec;
use embinv_core::embed::HashEmbedder;
use embinv_core::{AttackConfig, QueryLedger};
use embinv_harness::experiment::SUMMARY_HEADER;
use embinv_harness::remote::RemoteConfig;
use embinv_harness::service::spawn_background;
use embinv_harness::toy::synthetic_corpus;
use embinv_harness::{run_experiment, ExperimentSpec, TargetOutcome, VictimSpec};

fn spec_in(dir: &std::path::Path, samples: usize) -> ExperimentSpec {
    let corpus = dir.join("corpus.txt");
    std::fs::write(&corpus, synthetic_corpus(150, 3).join("\n")).unwrap();
    ExperimentSpec {
        dataset: Some(corpus.clone()),
        corpus: Some(corpus),
        samples,
        attack: AttackConfig { k_a: 5, k_b: 4, t_max: 4, ..Default::default() },
        report_path: Some(dir.join("report.jsonl")),
        summary_path: Some(dir.join("summary.csv")),
        ..Default::default()
    }
}

#[test]
fn zero_samples_write_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_in(dir.path(), 0);
    let out = run_experiment(&spec).unwrap();
    out.write(&spec).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.csv")).unwrap(), format!("{SUMMARY_HEADER}\n"));
    assert_eq!(std::fs::read_to_string(dir.path().join("report.jsonl")).unwrap(), "");
}

#[test]
fn summary_ledger_is_the_sum_of_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_in(dir.path(), 3);
    let out = run_experiment(&spec).unwrap();
    let mut total = QueryLedger::default();
    for r in out.reports() {
        total.merge(&r.ledger);
    }
    assert_eq!(out.summary.ledger, total);
    assert_eq!(out.summary.setup_ledger.online_sentences, 3);
    assert_eq!(out.summary.eval_ledger.online_sentences, 3);
    assert_eq!(out.summary.succeeded, 3);

    out.write(&spec).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[8], format!("{:.4}", total.online_sentences as f64));
    let jsonl = std::fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    for line in jsonl.lines() {
        assert!(matches!(serde_json::from_str::<TargetOutcome>(line).unwrap(), TargetOutcome::Ok(_)));
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec { defense: DefenseSpec::purmech(1.0, 4), ..spec_in(dir.path(), 3) };
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&ExperimentSpec { parallel: false, ..spec }).unwrap();
    assert_eq!(a.summary.to_csv(), b.summary.to_csv());
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
}

#[test]
fn remote_victim_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let embedder = HashEmbedder::new(64, 3, 21);
    let addr = spawn_background(Arc::new(embedder), DefenseSpec::none(), "127.0.0.1:0".parse().unwrap()).unwrap();
    let builtin = ExperimentSpec { victim: VictimSpec::Hash { embedder }, ..spec_in(dir.path(), 2) };
    let remote = ExperimentSpec {
        victim: VictimSpec::Remote(RemoteConfig { url: format!("http://{addr}"), timeout_secs: 5.0, retries: 0, dim: None }),
        ..builtin.clone()
    };
    let a = run_experiment(&builtin).unwrap();
    let b = run_experiment(&remote).unwrap();
    let recon = |o: &embinv_harness::ExperimentOutput| o.reports().map(|r| r.reconstruction.clone()).collect::<Vec<_>>();
    assert_eq!(recon(&a), recon(&b));
    assert_eq!(a.summary.metrics, b.summary.metrics);
}

#[test]
fn failed_targets_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        victim: VictimSpec::Remote(RemoteConfig { url: "http://127.0.0.1:9".into(), timeout_secs: 1.0, retries: 0, dim: Some(8) }),
        ..spec_in(dir.path(), 2)
    };
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.summary.failed, 2);
    assert_eq!(out.summary.to_csv(), format!("{SUMMARY_HEADER}\n"));
}
