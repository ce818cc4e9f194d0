//! Batch expectation maximization for sum weights and leaf parameters.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, WeightedRows};
use crate::error::{Result, SpnError};
use crate::eval::{Circuit, CHUNK_ROWS};
use crate::graph::SpnGraph;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Number of trailing log-likelihoods the variance test looks at.
    pub window: usize,
    pub var_tol: f64,
    /// Pseudo-count for leaf updates.
    pub leaf_alpha: f64,
    pub update_leaves: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 1000,
            window: 5,
            var_tol: 1e-7,
            leaf_alpha: 0.1,
            update_leaves: true,
        }
    }
}

impl EmConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(SpnError::InvalidArgument("max_iters must be at least 1".into()));
        }
        if self.window < 2 {
            return Err(SpnError::InvalidArgument("window must be at least 2".into()));
        }
        if !(self.var_tol > 0.0) {
            return Err(SpnError::InvalidArgument("var_tol must be positive".into()));
        }
        if !(self.leaf_alpha >= 0.0) {
            return Err(SpnError::InvalidArgument("leaf_alpha must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Mean training log-likelihood before each update.
    pub mean_ll: Vec<f64>,
    pub stop_reason: StopReason,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.mean_ll.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,mean_train_ll\n");
        for (i, ll) in self.mean_ll.iter().enumerate() {
            writeln!(out, "{},{ll:.17e}", i + 1).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| SpnError::io(path, e))
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

struct Counts {
    ll: f64,
    edge: Vec<f64>,
    leaf_mass: Vec<f64>,
    leaf_ones: Vec<f64>,
    zero_row: Option<usize>,
}

impl Counts {
    fn new(circuit: &Circuit, leaves: bool) -> Self {
        let n = if leaves { circuit.len() } else { 0 };
        Counts {
            ll: 0.0,
            edge: vec![0.0; circuit.n_edges()],
            leaf_mass: vec![0.0; n],
            leaf_ones: vec![0.0; n],
            zero_row: None,
        }
    }

    fn add(&mut self, other: &Counts) {
        self.ll += other.ll;
        self.edge.iter_mut().zip(&other.edge).for_each(|(a, b)| *a += b);
        self.leaf_mass.iter_mut().zip(&other.leaf_mass).for_each(|(a, b)| *a += b);
        self.leaf_ones.iter_mut().zip(&other.leaf_ones).for_each(|(a, b)| *a += b);
        if self.zero_row.is_none() {
            self.zero_row = other.zero_row;
        }
    }
}

fn expected_counts(circuit: &Circuit, rows: &WeightedRows, leaves: bool, leaf_pos: &[(usize, usize)]) -> Counts {
    let chunks: Vec<_> = rows.chunks(CHUNK_ROWS).collect();
    let partials: Vec<Counts> = chunks
        .into_par_iter()
        .enumerate()
        .map(|(ci, chunk)| {
            let mut counts = Counts::new(circuit, leaves);
            let mut values = vec![0.0; circuit.len()];
            let mut derivs = vec![0.0; circuit.len()];
            for (ri, (row, w)) in chunk.iter().enumerate() {
                let ll = circuit.forward_row(row, &mut values);
                if ll == f64::NEG_INFINITY {
                    counts.zero_row.get_or_insert(ci * CHUNK_ROWS + ri);
                    continue;
                }
                counts.ll += w * ll;
                circuit.backward(&values, &mut derivs, Some((&mut counts.edge, w)));
                if leaves {
                    for &(pos, var) in leaf_pos {
                        let r = w * derivs[pos];
                        counts.leaf_mass[pos] += r;
                        if row[var] != 0 {
                            counts.leaf_ones[pos] += r;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = Counts::new(circuit, leaves);
    for p in &partials {
        total.add(p);
    }
    total
}

/// One EM update over deduplicated rows. Returns the mean log-likelihood
/// under the parameters before the update.
pub fn em_step(graph: &mut SpnGraph, rows: &WeightedRows, config: &EmConfig) -> Result<f64> {
    if rows.n_cols() != graph.n_vars() {
        return Err(SpnError::UniverseMismatch {
            expected: graph.n_vars(),
            got: rows.n_cols(),
        });
    }
    if rows.is_empty() {
        return Err(SpnError::Empty("training data"));
    }
    let circuit = Circuit::for_root(graph)?;
    let leaf_pos: Vec<(usize, usize)> = (0..circuit.len())
        .filter_map(|pos| circuit.leaf_var(pos).map(|v| (pos, v)))
        .collect();
    let counts = expected_counts(&circuit, rows, config.update_leaves, &leaf_pos);
    if let Some(row) = counts.zero_row {
        return Err(SpnError::ZeroLikelihood { row });
    }
    for (pos, &id) in circuit.nodes().iter().enumerate() {
        if let Some((s, e)) = circuit.edge_range(pos) {
            let n = &counts.edge[s..e];
            if n.iter().sum::<f64>() > 0.0 {
                graph.set_sum_weights(id, n)?;
            }
        }
    }
    if config.update_leaves {
        let a = config.leaf_alpha;
        for &(pos, _) in &leaf_pos {
            let mass = counts.leaf_mass[pos];
            if mass + 2.0 * a > 0.0 {
                let p = (counts.leaf_ones[pos] + a) / (mass + 2.0 * a);
                graph.set_leaf_p(circuit.nodes()[pos], p.clamp(0.0, 1.0))?;
            }
        }
    }
    Ok(counts.ll / rows.total_weight())
}

/// Runs [`em_step`] until the variance of the last `window` mean
/// log-likelihoods drops below `var_tol`, or `max_iters` steps.
pub fn em_fit(graph: &mut SpnGraph, data: &BinaryDataset, config: &EmConfig) -> Result<EmTrace> {
    if data.n_cols() != graph.n_vars() {
        return Err(SpnError::UniverseMismatch {
            expected: graph.n_vars(),
            got: data.n_cols(),
        });
    }
    em_fit_rows(graph, &WeightedRows::from_dataset(data), config)
}

pub fn em_fit_rows(graph: &mut SpnGraph, rows: &WeightedRows, config: &EmConfig) -> Result<EmTrace> {
    config.check()?;
    let mut mean_ll = Vec::new();
    while mean_ll.len() < config.max_iters {
        mean_ll.push(em_step(graph, rows, config)?);
        if mean_ll.len() >= config.window && variance(&mean_ll[mean_ll.len() - config.window..]) < config.var_tol {
            return Ok(EmTrace {
                mean_ll,
                stop_reason: StopReason::Converged,
            });
        }
    }
    Ok(EmTrace {
        mean_ll,
        stop_reason: StopReason::MaxIters,
    })
}
