//! Sum-product networks over binary variables.
//!
//! The crate covers the full pipeline for tractable density estimation with
//! randomized SPN ensembles:
//!
//! - [`graph`]: arena-backed SPN DAGs with cached scopes and training slices.
//! - [`eval`]: log-space bottom-up evaluation, marginal queries and
//!   per-node derivatives.
//! - [`validate`], [`prune`], [`stats`]: structural checks, structural
//!   marginalization and size/depth statistics.
//! - [`learn`]: extremely randomized structure learning (random feature
//!   splits, random or 2-means instance clustering) plus an optional
//!   pairwise G-test splitter.
//! - [`em`]: batch expectation maximization for sum weights and leaves.
//! - [`ensemble`]: random sum-product forests and residual links between
//!   component networks, optionally gated on slice likelihood.
//! - [`diagnostics`]: pairwise mutual information and a brute-force
//!   enumeration oracle.
//! - [`data`]: benchmark dataset loading and model serialization.
//!
//! All probabilities are handled in natural-log space; mutual information is
//! reported in nats.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod em;
pub mod ensemble;
mod error;
pub mod eval;
pub mod graph;
pub mod learn;
pub mod prune;
pub mod scope;
pub mod stats;
pub mod synthetic;
pub mod validate;

pub use data::{BinaryDataset, DatasetBundle, WeightedRows};
pub use error::{Result, SpnError};
pub use eval::{Circuit, Evidence, VarState};
pub use graph::{Node, NodeId, SliceInfo, SpnGraph};
pub use scope::{Scope, VarId};
pub use stats::StructureStats;
pub use validate::{ValidityReport, Violation};

/// Lower/upper clamp applied to every Bernoulli leaf parameter.
pub const LEAF_EPSILON: f64 = 1e-12;

/// Tolerance on `|Σ w - 1|` for sum-node weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;
