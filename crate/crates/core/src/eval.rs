//! Log-space evaluation.
//!
//! A [`Circuit`] flattens the sub-DAG below one node into a topological
//! instruction list, so every reachable node is evaluated exactly once per
//! query no matter how many parents share it. Leaves on marginalized
//! variables evaluate to `ln 1 = 0`.

use rayon::prelude::*;

use crate::data::{BinaryDataset, WeightedRows};
use crate::error::{Result, SpnError};
use crate::graph::{Node, NodeId, SpnGraph};
use crate::scope::Scope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarState {
    Zero,
    One,
    Marginalized,
}

/// Partial assignment over the variables of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Evidence {
    states: Vec<VarState>,
}

impl Evidence {
    pub fn marginalized(n_vars: usize) -> Self {
        Evidence {
            states: vec![VarState::Marginalized; n_vars],
        }
    }

    pub fn from_row(row: &[u8]) -> Self {
        Evidence {
            states: row
                .iter()
                .map(|&v| if v == 0 { VarState::Zero } else { VarState::One })
                .collect(),
        }
    }

    /// Only the listed `(variable, value)` pairs are observed.
    pub fn with_observed(n_vars: usize, observed: &[(usize, u8)]) -> Self {
        let mut e = Evidence::marginalized(n_vars);
        for &(v, x) in observed {
            e.states[v] = if x == 0 { VarState::Zero } else { VarState::One };
        }
        e
    }

    /// Observes `row` on the variables of `keep`, marginalizes the rest.
    pub fn restricted(row: &[u8], keep: &Scope) -> Self {
        let mut e = Evidence::marginalized(row.len());
        for v in keep.iter() {
            e.states[v.index()] = if row[v.index()] == 0 { VarState::Zero } else { VarState::One };
        }
        e
    }

    pub fn set(&mut self, var: usize, state: VarState) {
        self.states[var] = state;
    }

    pub fn states(&self) -> &[VarState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf { var: u32, log_p1: f64, log_p0: f64 },
    Sum { start: u32, end: u32 },
    Product { start: u32, end: u32 },
}

/// Compiled evaluation plan for the sub-DAG rooted at one node.
#[derive(Debug, Clone)]
pub struct Circuit {
    nodes: Vec<NodeId>,
    ops: Vec<Op>,
    edge_child: Vec<u32>,
    edge_log_weight: Vec<f64>,
    position: Vec<u32>,
    n_vars: usize,
}

const ABSENT: u32 = u32::MAX;

#[inline]
fn log_sum_exp_edges(values: &[f64], children: &[u32], log_weights: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (c, lw) in children.iter().zip(log_weights) {
        let t = values[*c as usize] + lw;
        if t > max {
            max = t;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut acc = 0.0;
    for (c, lw) in children.iter().zip(log_weights) {
        acc += (values[*c as usize] + lw - max).exp();
    }
    max + acc.ln()
}

impl Circuit {
    pub fn new(graph: &SpnGraph, root: NodeId) -> Self {
        let nodes = graph.topological_order(root);
        let mut position = vec![ABSENT; graph.len()];
        for (pos, id) in nodes.iter().enumerate() {
            position[id.index()] = pos as u32;
        }
        let mut ops = Vec::with_capacity(nodes.len());
        let mut edge_child = Vec::new();
        let mut edge_log_weight = Vec::new();
        for id in &nodes {
            let start = edge_child.len() as u32;
            match graph.node(*id) {
                Node::Leaf { var, p } => ops.push(Op::Leaf {
                    var: var.0,
                    log_p1: p.ln(),
                    log_p0: (-p).ln_1p(),
                }),
                Node::Product { children } => {
                    for c in children {
                        edge_child.push(position[c.index()]);
                        edge_log_weight.push(0.0);
                    }
                    ops.push(Op::Product {
                        start,
                        end: edge_child.len() as u32,
                    });
                }
                Node::Sum { children, weights } => {
                    for (c, w) in children.iter().zip(weights) {
                        edge_child.push(position[c.index()]);
                        edge_log_weight.push(w.ln());
                    }
                    ops.push(Op::Sum {
                        start,
                        end: edge_child.len() as u32,
                    });
                }
            }
        }
        Circuit {
            nodes,
            ops,
            edge_child,
            edge_log_weight,
            position,
            n_vars: graph.n_vars(),
        }
    }

    pub fn for_root(graph: &SpnGraph) -> Result<Self> {
        Ok(Circuit::new(graph, graph.root_or_err()?))
    }

    /// Number of nodes in the plan (the reachable sub-DAG).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_child.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Graph ids in evaluation order; the last entry is the root.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        match self.position.get(id.index()) {
            Some(&p) if p != ABSENT => Some(p as usize),
            _ => None,
        }
    }

    pub fn root_position(&self) -> usize {
        self.nodes.len() - 1
    }

    pub(crate) fn edge_range(&self, pos: usize) -> Option<(usize, usize)> {
        match self.ops[pos] {
            Op::Sum { start, end } => Some((start as usize, end as usize)),
            _ => None,
        }
    }

    pub(crate) fn leaf_var(&self, pos: usize) -> Option<usize> {
        match self.ops[pos] {
            Op::Leaf { var, .. } => Some(var as usize),
            _ => None,
        }
    }

    /// Bottom-up pass. `leaf(var, ln p1, ln p0)` supplies leaf log-values;
    /// `values` must hold `len()` entries and receives every node's
    /// log-value. Returns the root's log-value.
    #[inline]
    pub fn forward_with<F>(&self, leaf: F, values: &mut [f64]) -> f64
    where
        F: Fn(usize, f64, f64) -> f64,
    {
        for (pos, op) in self.ops.iter().enumerate() {
            values[pos] = match *op {
                Op::Leaf { var, log_p1, log_p0 } => leaf(var as usize, log_p1, log_p0),
                Op::Product { start, end } => {
                    let (s, e) = (start as usize, end as usize);
                    self.edge_child[s..e].iter().map(|&c| values[c as usize]).sum()
                }
                Op::Sum { start, end } => {
                    let (s, e) = (start as usize, end as usize);
                    log_sum_exp_edges(values, &self.edge_child[s..e], &self.edge_log_weight[s..e])
                }
            };
        }
        values[self.nodes.len() - 1]
    }

    pub fn forward_row(&self, row: &[u8], values: &mut [f64]) -> f64 {
        self.forward_with(|v, l1, l0| if row[v] != 0 { l1 } else { l0 }, values)
    }

    pub fn forward_evidence(&self, evidence: &Evidence, values: &mut [f64]) -> f64 {
        let states = evidence.states();
        self.forward_with(
            |v, l1, l0| match states[v] {
                VarState::One => l1,
                VarState::Zero => l0,
                VarState::Marginalized => 0.0,
            },
            values,
        )
    }

    /// Observes `row` only on variables with `observed[v] == true`.
    pub fn forward_masked(&self, row: &[u8], observed: &[bool], values: &mut [f64]) -> f64 {
        self.forward_with(
            |v, l1, l0| {
                if !observed[v] {
                    0.0
                } else if row[v] != 0 {
                    l1
                } else {
                    l0
                }
            },
            values,
        )
    }

    /// Same as [`Circuit::forward_row`], but adds `delta` to the log-value of
    /// the node at plan position `pos` before its parents consume it.
    pub fn forward_row_with_offset(&self, row: &[u8], pos: usize, delta: f64, values: &mut [f64]) -> f64 {
        for (i, op) in self.ops.iter().enumerate() {
            values[i] = match *op {
                Op::Leaf { var, log_p1, log_p0 } => {
                    if row[var as usize] != 0 {
                        log_p1
                    } else {
                        log_p0
                    }
                }
                Op::Product { start, end } => {
                    let (s, e) = (start as usize, end as usize);
                    self.edge_child[s..e].iter().map(|&c| values[c as usize]).sum()
                }
                Op::Sum { start, end } => {
                    let (s, e) = (start as usize, end as usize);
                    log_sum_exp_edges(values, &self.edge_child[s..e], &self.edge_log_weight[s..e])
                }
            };
            if i == pos {
                values[i] += delta;
            }
        }
        values[self.nodes.len() - 1]
    }

    /// Top-down pass after a forward pass. Fills `derivs[i]` with
    /// `∂ log S / ∂ log S_i` in linear space, which lies in `[0, 1]` for a
    /// valid network. If `edge_flow` is given, it must hold `n_edges()`
    /// entries and accumulates `scale · w_ij S_j / S_i · derivs[i]` for
    /// every sum edge (the expected child responsibility).
    pub fn backward(&self, values: &[f64], derivs: &mut [f64], mut edge_flow: Option<(&mut [f64], f64)>) {
        let n = self.nodes.len();
        derivs[..n].fill(0.0);
        derivs[n - 1] = 1.0;
        for pos in (0..n).rev() {
            let d = derivs[pos];
            if d == 0.0 {
                continue;
            }
            match self.ops[pos] {
                Op::Leaf { .. } => {}
                Op::Product { start, end } => {
                    for &c in &self.edge_child[start as usize..end as usize] {
                        derivs[c as usize] += d;
                    }
                }
                Op::Sum { start, end } => {
                    let parent = values[pos];
                    for e in start as usize..end as usize {
                        let c = self.edge_child[e] as usize;
                        let share = d * (self.edge_log_weight[e] + values[c] - parent).exp();
                        derivs[c] += share;
                        if let Some((flow, scale)) = edge_flow.as_mut() {
                            flow[e] += *scale * share;
                        }
                    }
                }
            }
        }
    }

    /// `ln(∂ log S / ∂ log S_i)` for every plan position on a full row.
    pub fn log_derivatives(&self, row: &[u8]) -> Vec<f64> {
        let mut values = vec![0.0; self.len()];
        let mut derivs = vec![0.0; self.len()];
        self.forward_row(row, &mut values);
        self.backward(&values, &mut derivs, None);
        derivs.into_iter().map(f64::ln).collect()
    }

    /// Weighted mean log-likelihood over deduplicated rows. Chunking is
    /// fixed, so the result does not depend on the thread count.
    pub fn mean_log_likelihood(&self, rows: &WeightedRows) -> f64 {
        let partials: Vec<f64> = rows
            .chunks(CHUNK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| {
                let mut values = vec![0.0; self.len()];
                chunk.iter().map(|(row, w)| w * self.forward_row(row, &mut values)).sum::<f64>()
            })
            .collect();
        partials.iter().sum::<f64>() / rows.total_weight()
    }
}

pub(crate) const CHUNK_ROWS: usize = 256;

/// Log-values of every node below a query root, plus how many nodes were
/// evaluated.
#[derive(Debug, Clone)]
pub struct NodeValues {
    pub nodes: Vec<NodeId>,
    pub log_values: Vec<f64>,
    pub evaluated: usize,
}

impl NodeValues {
    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.nodes.iter().position(|n| *n == id).map(|i| self.log_values[i])
    }
}

impl SpnGraph {
    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_vars() {
            return Err(SpnError::LengthMismatch {
                expected: self.n_vars(),
                got: len,
            });
        }
        Ok(())
    }

    /// `ln S(x)` for a full binary assignment.
    pub fn log_likelihood(&self, row: &[u8]) -> Result<f64> {
        self.check_len(row.len())?;
        let circuit = Circuit::for_root(self)?;
        let mut values = vec![0.0; circuit.len()];
        Ok(circuit.forward_row(row, &mut values))
    }

    /// `ln S(e)`, summing out every marginalized variable.
    pub fn log_marginal(&self, evidence: &Evidence) -> Result<f64> {
        self.log_marginal_at(self.root_or_err()?, evidence)
    }

    pub fn log_marginal_at(&self, node: NodeId, evidence: &Evidence) -> Result<f64> {
        self.check_len(evidence.len())?;
        if !self.contains(node) {
            return Err(SpnError::UnknownNode(node));
        }
        let circuit = Circuit::new(self, node);
        let mut values = vec![0.0; circuit.len()];
        Ok(circuit.forward_evidence(evidence, &mut values))
    }

    /// Evaluates every node below `node` once under `evidence`.
    pub fn node_values(&self, node: NodeId, evidence: &Evidence) -> Result<NodeValues> {
        self.check_len(evidence.len())?;
        let circuit = Circuit::new(self, node);
        let mut values = vec![0.0; circuit.len()];
        circuit.forward_evidence(evidence, &mut values);
        Ok(NodeValues {
            evaluated: circuit.len(),
            nodes: circuit.nodes,
            log_values: values,
        })
    }

    /// Mean of `ln S(x)` over the rows of `data`.
    pub fn mean_log_likelihood(&self, data: &BinaryDataset) -> Result<f64> {
        if data.n_cols() != self.n_vars() {
            return Err(SpnError::UniverseMismatch {
                expected: self.n_vars(),
                got: data.n_cols(),
            });
        }
        if data.n_rows() == 0 {
            return Err(SpnError::Empty("dataset"));
        }
        let circuit = Circuit::for_root(self)?;
        Ok(circuit.mean_log_likelihood(&WeightedRows::from_dataset(data)))
    }

    /// Per-row `ln S(x)` in row order.
    pub fn row_log_likelihoods(&self, data: &BinaryDataset) -> Result<Vec<f64>> {
        if data.n_cols() != self.n_vars() {
            return Err(SpnError::UniverseMismatch {
                expected: self.n_vars(),
                got: data.n_cols(),
            });
        }
        let circuit = Circuit::for_root(self)?;
        Ok((0..data.n_rows())
            .into_par_iter()
            .map_init(
                || vec![0.0; circuit.len()],
                |values, r| circuit.forward_row(data.row(r), values),
            )
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scope::VarId;

    const TOL: f64 = 1e-12;

    #[test]
    fn single_leaf() {
        let mut g = SpnGraph::new(1);
        let l = g.add_leaf(VarId(0), 0.3).unwrap();
        g.set_root(l).unwrap();
        assert!((g.log_likelihood(&[1]).unwrap() - 0.3f64.ln()).abs() < TOL);
        assert!((g.log_likelihood(&[1]).unwrap() - (-1.20397)).abs() < 1e-5);
        assert!((g.log_likelihood(&[0]).unwrap() - 0.7f64.ln()).abs() < TOL);
    }

    #[test]
    fn product_of_two_fair_leaves() {
        let mut g = SpnGraph::new(2);
        let a = g.add_leaf(VarId(0), 0.5).unwrap();
        let b = g.add_leaf(VarId(1), 0.5).unwrap();
        let p = g.add_product(vec![a, b]).unwrap();
        g.set_root(p).unwrap();
        assert!((g.log_likelihood(&[1, 0]).unwrap() - 0.25f64.ln()).abs() < TOL);
    }

    #[test]
    fn mixture_of_two_leaves() {
        let mut g = SpnGraph::new(1);
        let a = g.add_leaf(VarId(0), 0.2).unwrap();
        let b = g.add_leaf(VarId(0), 0.7).unwrap();
        let s = g.add_sum(vec![a, b], vec![0.6, 0.4]).unwrap();
        g.set_root(s).unwrap();
        assert!((g.log_likelihood(&[1]).unwrap() - 0.4f64.ln()).abs() < TOL);
    }

    #[test]
    fn marginals_on_factorized_model() {
        let mut g = SpnGraph::new(3);
        let a = g.add_leaf(VarId(0), 0.3).unwrap();
        let b = g.add_leaf(VarId(1), 0.8).unwrap();
        let c = g.add_leaf(VarId(2), 0.1).unwrap();
        let p = g.add_product(vec![a, b, c]).unwrap();
        g.set_root(p).unwrap();
        let e = Evidence::with_observed(3, &[(0, 1)]);
        assert!((g.log_marginal(&e).unwrap() - 0.3f64.ln()).abs() < TOL);
        assert_eq!(g.log_marginal(&Evidence::marginalized(3)).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut g = SpnGraph::new(2);
        let a = g.add_leaf(VarId(0), 0.3).unwrap();
        g.set_root(a).unwrap();
        assert!(matches!(g.log_likelihood(&[1]), Err(SpnError::LengthMismatch { .. })));
        assert!(g.log_marginal(&Evidence::marginalized(3)).is_err());
    }

    #[test]
    fn shared_nodes_are_evaluated_once() {
        let mut g = SpnGraph::new(2);
        let a = g.add_leaf(VarId(0), 0.3).unwrap();
        let b = g.add_leaf(VarId(1), 0.6).unwrap();
        let b2 = g.add_leaf(VarId(1), 0.1).unwrap();
        let p1 = g.add_product(vec![a, b]).unwrap();
        let p2 = g.add_product(vec![a, b2]).unwrap();
        let s = g.add_sum(vec![p1, p2], vec![0.5, 0.5]).unwrap();
        let vals = g.node_values(s, &Evidence::from_row(&[1, 1])).unwrap();
        assert_eq!(vals.evaluated, g.bfs(s).len());
        assert_eq!(vals.evaluated, 6);
        let expected = (0.5 * 0.3 * 0.6 + 0.5 * 0.3 * 0.1f64).ln();
        assert!((vals.get(s).unwrap() - expected).abs() < TOL);
    }

    #[test]
    fn derivatives_of_a_mixture() {
        let mut g = SpnGraph::new(1);
        let a = g.add_leaf(VarId(0), 0.2).unwrap();
        let b = g.add_leaf(VarId(0), 0.7).unwrap();
        let s = g.add_sum(vec![a, b], vec![0.6, 0.4]).unwrap();
        let c = Circuit::new(&g, s);
        let d = c.log_derivatives(&[1]);
        // responsibilities 0.12 / 0.4 and 0.28 / 0.4
        assert!((d[c.position(a).unwrap()].exp() - 0.3).abs() < TOL);
        assert!((d[c.position(b).unwrap()].exp() - 0.7).abs() < TOL);
        assert_eq!(d[c.root_position()], 0.0);
    }
}
