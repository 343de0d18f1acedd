//! Benchmark harness: labeled synthetic corpora with ground-truth mock
//! scripts, the three execution strategies, and quality / cost tables.
//!
//! Everything runs on the deterministic mock backend, so two runs with the
//! same seed produce byte-identical ledgers, traces and tables.

pub mod corpus;
pub mod demo;
pub mod experiment;
pub mod metrics;
pub mod ratio;

pub use corpus::{gen_corpus, EmailKind, LabeledCorpus};
pub use demo::write_demo;
pub use experiment::{
    run_experiment, run_ratio_experiment, BenchBackend, BenchConfig, ExperimentReport, RatioReport, Strategy,
    StrategyResult, StrategyRun,
};
pub use metrics::{metrics, Metrics};
pub use ratio::{gen_ratio_corpus, RatioCorpus};
