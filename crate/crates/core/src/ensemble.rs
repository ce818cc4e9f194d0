//! Forests of SPNs and residual links between them.
//!
//! [`build_rspf`] mixes components uniformly under one new sum node.
//! [`build_resspn`] additionally copies one component at random and links
//! sum nodes of the copy to (marginalized) nodes of every other component
//! whose scope covers theirs. In informed mode a link is kept only if it
//! raises the mean log-value of its source node over that node's training
//! slice.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, WeightedRows};
use crate::error::{Result, SpnError};
use crate::eval::Circuit;
use crate::graph::{merge_graphs, Node, NodeId, SpnGraph};
use crate::prune::{prune_to_scope_cached, PruneCache};
use crate::validate::validate_from;

/// Lower and upper clamp for residual-link initial weights.
pub const RESIDUAL_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_components: usize,
    /// Link budget per component as a fraction of the copy's node count.
    pub k: f64,
    pub informed: bool,
    pub seed: u64,
    /// Maximum links one source node may receive from one component;
    /// `None` follows the unbounded literal procedure.
    pub per_s1_cap: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_components: 10,
            k: 0.1,
            informed: false,
            seed: 0,
            per_s1_cap: Some(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLinkRecord {
    pub component: usize,
    /// Sum node of the copy receiving the link.
    pub source: NodeId,
    /// Node of the component whose marginal is linked.
    pub target: NodeId,
    /// Node actually added as a child (equal to `target` when no pruning was needed).
    pub pruned_target: NodeId,
    pub scope_size: usize,
    pub initial_weight: f64,
    pub accepted: bool,
    /// Change in mean slice log-value, informed mode only.
    pub gate_delta: Option<f64>,
}

pub fn audit_csv(records: &[ResidualLinkRecord]) -> String {
    let mut out = String::from("component,source,target,pruned_target,scope_size,initial_weight,accepted,gate_delta\n");
    for r in records {
        write!(
            out,
            "{},{},{},{},{},{:.17e},{},",
            r.component, r.source.0, r.target.0, r.pruned_target.0, r.scope_size, r.initial_weight, r.accepted
        )
        .unwrap();
        if let Some(d) = r.gate_delta {
            write!(out, "{d:.17e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_audit_csv(records: &[ResidualLinkRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, audit_csv(records)).map_err(|e| SpnError::io(path, e))
}

fn check_components(components: &[SpnGraph]) -> Result<()> {
    let first = components.first().ok_or(SpnError::Empty("component list"))?;
    for c in components {
        if c.n_vars() != first.n_vars() {
            return Err(SpnError::UniverseMismatch {
                expected: first.n_vars(),
                got: c.n_vars(),
            });
        }
        c.root_or_err()?;
    }
    Ok(())
}

fn add_uniform_root(graph: &mut SpnGraph, roots: &[NodeId]) -> Result<NodeId> {
    let w = vec![1.0 / roots.len() as f64; roots.len()];
    let root = graph.add_sum(roots.to_vec(), w)?;
    if let Some(slice) = roots.iter().find_map(|r| graph.slice(*r).cloned()) {
        graph.set_slice(root, slice);
    }
    graph.set_root(root)?;
    Ok(root)
}

/// Uniform mixture of the components under a new root sum node.
pub fn build_rspf(components: &[SpnGraph]) -> Result<SpnGraph> {
    check_components(components)?;
    let refs: Vec<&SpnGraph> = components.iter().collect();
    let (mut graph, remaps) = merge_graphs(&refs)?;
    let roots: Vec<NodeId> = components
        .iter()
        .zip(&remaps)
        .map(|(c, m)| m[c.root().expect("checked").index()])
        .collect();
    add_uniform_root(&mut graph, &roots)?;
    Ok(graph)
}

/// Initial weight of a residual child: `c2 / (c1 + c2)` from slice counts,
/// clamped to `[1e-6, 1 - 1e-6]`; `1 / (n_existing + 1)` when either count
/// is unknown.
pub fn init_residual_weight(c1: Option<usize>, c2: Option<usize>, n_existing: usize) -> f64 {
    let w = match (c1, c2) {
        (Some(c1), Some(c2)) if c1 + c2 > 0 => c2 as f64 / (c1 + c2) as f64,
        _ => 1.0 / (n_existing + 1) as f64,
    };
    w.clamp(RESIDUAL_WEIGHT_FLOOR, 1.0 - RESIDUAL_WEIGHT_FLOOR)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn weighted_values(graph: &SpnGraph, node: NodeId, rows: &WeightedRows) -> Vec<f64> {
    let circuit = Circuit::new(graph, node);
    let mut buf = vec![0.0; circuit.len()];
    rows.iter().map(|(row, _)| circuit.forward_row(row, &mut buf)).collect()
}

fn weighted_mean(values: &[f64], rows: &WeightedRows) -> f64 {
    values.iter().zip(rows.iter()).map(|(v, (_, w))| v * w).sum::<f64>() / rows.total_weight()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOutcome {
    pub accepted: bool,
    /// Mean slice log-value after minus before.
    pub delta: f64,
}

/// Tentatively adds `candidate` under `s1` with `weight` and keeps it only if
/// the mean log-value of `s1` over `rows` strictly increases. On rejection
/// `s1` is restored bit for bit.
pub fn info_gate(graph: &mut SpnGraph, s1: NodeId, candidate: NodeId, weight: f64, rows: &WeightedRows) -> Result<GateOutcome> {
    if rows.is_empty() {
        return Err(SpnError::Empty("gate slice"));
    }
    let before = weighted_mean(&weighted_values(graph, s1, rows), rows);
    let (outcome, _) = gate_with_before(graph, s1, candidate, weight, rows, before)?;
    Ok(outcome)
}

fn gate_with_before(
    graph: &mut SpnGraph,
    s1: NodeId,
    candidate: NodeId,
    weight: f64,
    rows: &WeightedRows,
    before: f64,
) -> Result<(GateOutcome, Option<Vec<f64>>)> {
    let Node::Sum { children, weights } = graph.node(s1).clone() else {
        return Err(SpnError::WrongNodeKind { node: s1, expected: "sum" });
    };
    graph.add_sum_child(s1, candidate, weight)?;
    let after_values = weighted_values(graph, s1, rows);
    let delta = weighted_mean(&after_values, rows) - before;
    if delta > 0.0 {
        Ok((GateOutcome { accepted: true, delta }, Some(after_values)))
    } else {
        graph.restore_sum(s1, children, weights);
        Ok((GateOutcome { accepted: false, delta }, None))
    }
}

struct GateState {
    rows: WeightedRows,
    values: Vec<f64>,
    mean: f64,
}

/// Incremental residual-link construction, one component at a time.
pub struct ResSpnBuilder<'a> {
    graph: SpnGraph,
    component_roots: Vec<NodeId>,
    copy_root: NodeId,
    copy_of: usize,
    copy_size: usize,
    sources: Vec<NodeId>,
    pending: Vec<usize>,
    data: &'a BinaryDataset,
    config: EnsembleConfig,
    cache: PruneCache,
    records: Vec<ResidualLinkRecord>,
    links_per_component: Vec<usize>,
}

impl<'a> ResSpnBuilder<'a> {
    pub fn new(components: &[SpnGraph], data: &'a BinaryDataset, config: &EnsembleConfig) -> Result<Self> {
        if components.len() < 2 {
            return Err(SpnError::InvalidArgument(format!(
                "residual links need at least 2 components, got {}",
                components.len()
            )));
        }
        check_components(components)?;
        if !(0.0..=1.0).contains(&config.k) {
            return Err(SpnError::InvalidArgument(format!("k {} not in [0, 1]", config.k)));
        }
        if config.informed {
            if data.n_cols() != components[0].n_vars() {
                return Err(SpnError::UniverseMismatch {
                    expected: components[0].n_vars(),
                    got: data.n_cols(),
                });
            }
            if !components.iter().all(|c| c.slice(c.root().unwrap()).is_some()) {
                return Err(SpnError::InvalidArgument("informed gating needs training slices".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let copy_of = rng.gen_range(0..components.len());
        let mut refs: Vec<&SpnGraph> = components.iter().collect();
        refs.push(&components[copy_of]);
        let (graph, remaps) = merge_graphs(&refs)?;
        let roots: Vec<NodeId> = refs
            .iter()
            .zip(&remaps)
            .map(|(c, m)| m[c.root().unwrap().index()])
            .collect();
        let copy_root = *roots.last().unwrap();
        let order = graph.bfs(copy_root);
        let copy_size = order.len();
        let sources = order
            .into_iter()
            .skip(1)
            .filter(|id| graph.node(*id).is_sum())
            .collect();
        Ok(ResSpnBuilder {
            graph,
            component_roots: roots[..components.len()].to_vec(),
            copy_root,
            copy_of,
            copy_size,
            sources,
            pending: (0..components.len()).filter(|&i| i != copy_of).rev().collect(),
            data,
            config: config.clone(),
            cache: PruneCache::new(),
            records: Vec::new(),
            links_per_component: vec![0; components.len()],
        })
    }

    /// Index of the component that was copied.
    pub fn copy_of(&self) -> usize {
        self.copy_of
    }

    /// Number of nodes of the copy before any link was drawn.
    pub fn copy_size(&self) -> usize {
        self.copy_size
    }

    pub fn records(&self) -> &[ResidualLinkRecord] {
        &self.records
    }

    pub fn links_per_component(&self) -> &[usize] {
        &self.links_per_component
    }

    pub fn remaining(&self) -> usize {
        self.pending.len()
    }

    /// Draws all links into the next component and returns its index, or
    /// `None` when every component has been processed.
    pub fn link_component(&mut self) -> Result<Option<usize>> {
        let Some(ci) = self.pending.pop() else {
            return Ok(None);
        };
        let targets = self.graph.bfs(self.component_roots[ci]);
        let budget = self.config.k * self.copy_size as f64;
        let cap = self.config.per_s1_cap.unwrap_or(usize::MAX);
        let mut eta = 0usize;
        for si in 0..self.sources.len() {
            let s1 = self.sources[si];
            let scope1 = self.graph.scope(s1).clone();
            let mut gate: Option<GateState> = None;
            let mut added = 0usize;
            for &s2 in &targets {
                if added >= cap {
                    break;
                }
                if !scope1.is_subset(self.graph.scope(s2)) {
                    continue;
                }
                let pruned = prune_to_scope_cached(&mut self.graph, s2, &scope1, &mut self.cache)?;
                if self.graph.node(s1).children().contains(&pruned) {
                    continue;
                }
                let weight = init_residual_weight(
                    self.graph.slice(s1).map(|s| s.count()),
                    self.graph.slice(s2).map(|s| s.count()),
                    self.graph.node(s1).children().len(),
                );
                let mut record = ResidualLinkRecord {
                    component: ci,
                    source: s1,
                    target: s2,
                    pruned_target: pruned,
                    scope_size: scope1.len(),
                    initial_weight: weight,
                    accepted: true,
                    gate_delta: None,
                };
                if self.config.informed {
                    let state = match gate.take() {
                        Some(s) => s,
                        None => self.gate_state(s1)?,
                    };
                    if state.rows.is_empty() {
                        gate = Some(state);
                        continue;
                    }
                    // Closed-form screen before touching the graph.
                    let cand = weighted_values(&self.graph, pruned, &state.rows);
                    let (lw, l1w) = (weight.ln(), (-weight).ln_1p());
                    let predicted: Vec<f64> = state
                        .values
                        .iter()
                        .zip(&cand)
                        .map(|(b, c)| log_add_exp(l1w + b, lw + c))
                        .collect();
                    let predicted_delta = weighted_mean(&predicted, &state.rows) - state.mean;
                    if predicted_delta <= 0.0 {
                        record.accepted = false;
                        record.gate_delta = Some(predicted_delta);
                        self.records.push(record);
                        gate = Some(state);
                        continue;
                    }
                    let (outcome, after) = gate_with_before(&mut self.graph, s1, pruned, weight, &state.rows, state.mean)?;
                    record.accepted = outcome.accepted;
                    record.gate_delta = Some(outcome.delta);
                    self.records.push(record);
                    gate = Some(match after {
                        Some(values) => GateState {
                            mean: weighted_mean(&values, &state.rows),
                            values,
                            rows: state.rows,
                        },
                        None => state,
                    });
                    if !outcome.accepted {
                        continue;
                    }
                } else {
                    self.graph.add_sum_child(s1, pruned, weight)?;
                    self.records.push(record);
                }
                if cfg!(debug_assertions) {
                    let report = validate_from(&self.graph, s1);
                    if !report.is_valid() {
                        return Err(SpnError::Invalid(report));
                    }
                }
                eta += 1;
                added += 1;
            }
            if eta as f64 > budget {
                break;
            }
        }
        self.links_per_component[ci] = eta;
        Ok(Some(ci))
    }

    fn gate_state(&self, s1: NodeId) -> Result<GateState> {
        let rows = match self.graph.slice(s1) {
            Some(slice) => WeightedRows::from_subset(self.data, slice.rows()),
            None => WeightedRows::from_subset(self.data, &[]),
        };
        let values = weighted_values(&self.graph, s1, &rows);
        let mean = if rows.is_empty() { 0.0 } else { weighted_mean(&values, &rows) };
        Ok(GateState { rows, values, mean })
    }

    /// The current state wrapped as a mixture of components and copy.
    pub fn snapshot(&self) -> Result<SpnGraph> {
        let mut g = self.graph.clone();
        let mut roots = self.component_roots.clone();
        roots.push(self.copy_root);
        add_uniform_root(&mut g, &roots)?;
        Ok(g)
    }

    /// Processes all remaining components and wraps the result.
    pub fn finish(mut self) -> Result<(SpnGraph, Vec<ResidualLinkRecord>)> {
        while self.link_component()?.is_some() {}
        let mut roots = self.component_roots.clone();
        roots.push(self.copy_root);
        add_uniform_root(&mut self.graph, &roots)?;
        Ok((self.graph, self.records))
    }
}

pub fn build_resspn(
    components: &[SpnGraph],
    data: &BinaryDataset,
    config: &EnsembleConfig,
) -> Result<(SpnGraph, Vec<ResidualLinkRecord>)> {
    ResSpnBuilder::new(components, data, config)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scope::VarId;
    use crate::validate::validate;

    fn leaf_graph(p: f64) -> SpnGraph {
        let mut g = SpnGraph::new(1);
        let l = g.add_leaf(VarId(0), p).unwrap();
        g.set_root(l).unwrap();
        g
    }

    #[test]
    fn rspf_weights_are_uniform() {
        let comps: Vec<_> = (0..10).map(|i| leaf_graph(0.05 + 0.09 * i as f64)).collect();
        let g = build_rspf(&comps).unwrap();
        match g.node(g.root().unwrap()) {
            Node::Sum { weights, .. } => assert!(weights.iter().all(|w| (w - 0.1).abs() < 1e-15)),
            _ => panic!("root must be a sum"),
        }
        assert!(validate(&g).is_valid());
        assert!(build_rspf(&[]).is_err());
    }

    #[test]
    fn residual_weight_rule() {
        assert_eq!(init_residual_weight(Some(100), Some(100), 2), 0.5);
        assert_eq!(init_residual_weight(Some(300), Some(100), 2), 0.25);
        assert_eq!(init_residual_weight(Some(300), Some(0), 2), RESIDUAL_WEIGHT_FLOOR);
        assert_eq!(init_residual_weight(None, Some(10), 3), 0.25);
    }

    #[test]
    fn fewer_than_two_components_is_an_error() {
        let data = BinaryDataset::from_rows(&[vec![1]]).unwrap();
        assert!(build_resspn(&[leaf_graph(0.5)], &data, &EnsembleConfig::default()).is_err());
    }

    #[test]
    fn audit_csv_has_header_and_rows() {
        let r = ResidualLinkRecord {
            component: 1,
            source: NodeId(4),
            target: NodeId(2),
            pruned_target: NodeId(9),
            scope_size: 3,
            initial_weight: 0.25,
            accepted: true,
            gate_delta: None,
        };
        let csv = audit_csv(&[r]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1,4,2,9,3,2.5"));
        assert!(lines[1].ends_with(",true,"));
    }
}
