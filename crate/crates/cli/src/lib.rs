//! Benchmark harness for randomized SPN ensembles: component learning,
//! ensemble assembly, EM, evaluation and JSON/CSV reports.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::{EnsembleKind, RunConfig};
