//! Structural validity checks.

use std::fmt;

use fixedbitset::FixedBitSet;

use crate::graph::{Node, NodeId, SpnGraph};
use crate::{LEAF_EPSILON, WEIGHT_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoRoot,
    DanglingChild { node: NodeId, child: NodeId },
    Cycle { node: NodeId },
    EmptyChildren { node: NodeId },
    WeightCount { node: NodeId, children: usize, weights: usize },
    NegativeWeight { node: NodeId, index: usize, weight: f64 },
    WeightSum { node: NodeId, sum: f64 },
    Incomplete { node: NodeId, child: NodeId },
    NotDecomposable { node: NodeId, first: NodeId, second: NodeId },
    LeafVariable { node: NodeId, var: u32 },
    LeafProbability { node: NodeId, p: f64 },
    ScopeCache { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoRoot => write!(f, "no root designated"),
            Violation::DanglingChild { node, child } => write!(f, "{node}: child {child} does not exist"),
            Violation::Cycle { node } => write!(f, "{node}: lies on a cycle"),
            Violation::EmptyChildren { node } => write!(f, "{node}: inner node without children"),
            Violation::WeightCount { node, children, weights } => {
                write!(f, "{node}: {children} children but {weights} weights")
            }
            Violation::NegativeWeight { node, index, weight } => {
                write!(f, "{node}: weight {index} is {weight}")
            }
            Violation::WeightSum { node, sum } => write!(f, "{node}: weights sum to {sum} (normalization)"),
            Violation::Incomplete { node, child } => {
                write!(f, "{node}: child {child} has a different scope (completeness)")
            }
            Violation::NotDecomposable { node, first, second } => {
                write!(f, "{node}: children {first} and {second} share variables (decomposability)")
            }
            Violation::LeafVariable { node, var } => write!(f, "{node}: variable X{var} outside universe"),
            Violation::LeafProbability { node, p } => write!(f, "{node}: leaf probability {p} out of range"),
            Violation::ScopeCache { node } => write!(f, "{node}: cached scope is stale"),
        }
    }
}

/// All violations found in one pass; empty means the network is a valid SPN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks the network below the root.
pub fn validate(graph: &SpnGraph) -> ValidityReport {
    match graph.root() {
        Some(root) if graph.contains(root) => validate_from(graph, root),
        _ => {
            let mut report = ValidityReport::default();
            report.violations.push(Violation::NoRoot);
            report
        }
    }
}

/// Checks the sub-network reachable from `start`.
pub fn validate_from(graph: &SpnGraph, start: NodeId) -> ValidityReport {
    let mut out = Vec::new();
    let reachable = reachable_checked(graph, start, &mut out);
    let fresh_scopes = graph.compute_scopes();
    let scopes = graph.scopes();

    for &id in &reachable {
        let node = graph.node(id);
        if scopes[id.index()] != fresh_scopes[id.index()] {
            out.push(Violation::ScopeCache { node: id });
        }
        let existing: Vec<NodeId> = node.children().iter().copied().filter(|c| graph.contains(*c)).collect();
        match node {
            Node::Leaf { var, p } => {
                if var.index() >= graph.n_vars() {
                    out.push(Violation::LeafVariable { node: id, var: var.0 });
                }
                if !(*p >= LEAF_EPSILON && *p <= 1.0 - LEAF_EPSILON) {
                    out.push(Violation::LeafProbability { node: id, p: *p });
                }
            }
            Node::Product { children } => {
                if children.is_empty() {
                    out.push(Violation::EmptyChildren { node: id });
                }
                let total: usize = existing.iter().map(|c| fresh_scopes[c.index()].len()).sum();
                if total != fresh_scopes[id.index()].len() {
                    'pairs: for (i, a) in existing.iter().enumerate() {
                        for b in &existing[i + 1..] {
                            if fresh_scopes[a.index()].intersects(&fresh_scopes[b.index()]) {
                                out.push(Violation::NotDecomposable {
                                    node: id,
                                    first: *a,
                                    second: *b,
                                });
                                break 'pairs;
                            }
                        }
                    }
                }
            }
            Node::Sum { children, weights } => {
                if children.is_empty() {
                    out.push(Violation::EmptyChildren { node: id });
                }
                if children.len() != weights.len() {
                    out.push(Violation::WeightCount {
                        node: id,
                        children: children.len(),
                        weights: weights.len(),
                    });
                }
                for (i, w) in weights.iter().enumerate() {
                    if !(w.is_finite() && *w >= 0.0) {
                        out.push(Violation::NegativeWeight { node: id, index: i, weight: *w });
                    }
                }
                let sum: f64 = weights.iter().sum();
                if !((sum - 1.0).abs() <= WEIGHT_TOLERANCE) {
                    out.push(Violation::WeightSum { node: id, sum });
                }
                if let Some(first) = existing.first() {
                    for c in &existing[1..] {
                        if fresh_scopes[c.index()] != fresh_scopes[first.index()] {
                            out.push(Violation::Incomplete { node: id, child: *c });
                        }
                    }
                }
            }
        }
    }
    ValidityReport { violations: out }
}

/// Reachable nodes from `start`, recording dangling edges and cycles.
fn reachable_checked(graph: &SpnGraph, start: NodeId, out: &mut Vec<Violation>) -> Vec<NodeId> {
    let n = graph.len();
    let mut done = FixedBitSet::with_capacity(n);
    let mut on_stack = FixedBitSet::with_capacity(n);
    let mut order = Vec::new();
    let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
    on_stack.insert(start.index());
    while let Some(&mut (id, ref mut next)) = stack.last_mut() {
        let children = graph.node(id).children();
        if *next < children.len() {
            let c = children[*next];
            *next += 1;
            if !graph.contains(c) {
                out.push(Violation::DanglingChild { node: id, child: c });
            } else if on_stack.contains(c.index()) {
                out.push(Violation::Cycle { node: c });
            } else if !done.contains(c.index()) {
                on_stack.insert(c.index());
                stack.push((c, 0));
            }
        } else {
            on_stack.set(id.index(), false);
            done.insert(id.index());
            order.push(id);
            stack.pop();
        }
    }
    order
}
