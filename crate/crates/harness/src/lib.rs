//! Experiment harness around `embinv_core`: dataset runs with JSON-lines and
//! CSV reports, an HTTP embedding service that can act as the victim, the
//! matching HTTP client, and a synthetic toy world for desk-scale runs.

pub mod experiment;
pub mod remote;
pub mod service;
pub mod toy;

pub use experiment::{run_experiment, ExperimentOutput, ExperimentSpec, Summary, TargetOutcome, VictimSpec};
