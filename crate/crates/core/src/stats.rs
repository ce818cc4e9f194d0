//! Size and depth statistics.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::graph::{Node, NodeId, SpnGraph};

/// Counts over the nodes reachable from a root.
///
/// `n_layers` is the number of nodes on the longest root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructureStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_layers: usize,
    pub n_sum: usize,
    pub n_product: usize,
    pub n_leaf: usize,
}

impl fmt::Display for StructureStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} edges, {} layers", self.n_edges, self.n_layers)
    }
}

pub fn structure_stats(graph: &SpnGraph) -> Result<StructureStats> {
    Ok(structure_stats_from(graph, graph.root_or_err()?))
}

pub fn structure_stats_from(graph: &SpnGraph, root: NodeId) -> StructureStats {
    let order = graph.topological_order(root);
    let mut depth = vec![0usize; graph.len()];
    let mut stats = StructureStats {
        n_nodes: order.len(),
        n_edges: 0,
        n_layers: 0,
        n_sum: 0,
        n_product: 0,
        n_leaf: 0,
    };
    for id in &order {
        let node = graph.node(*id);
        match node {
            Node::Sum { .. } => stats.n_sum += 1,
            Node::Product { .. } => stats.n_product += 1,
            Node::Leaf { .. } => stats.n_leaf += 1,
        }
        stats.n_edges += node.children().len();
        depth[id.index()] = 1 + node.children().iter().map(|c| depth[c.index()]).max().unwrap_or(0);
    }
    stats.n_layers = depth[root.index()];
    stats
}

/// Published structure sizes for side-by-side reports:
/// `(dataset, LearnSPN edges, LearnSPN layers, ResSPN-10 edges, ResSPN-10 layers)`.
/// These are quoted reference values, not reproduced here.
pub const REFERENCE_STRUCTURES: &[(&str, usize, usize, usize, usize)] = &[
    ("nltcs", 7509, 4, 17102, 169),
    ("msnbc", 22350, 4, 8040, 136),
    ("plants", 55668, 6, 66498, 298),
    ("audio", 70036, 8, 153791, 296),
    ("jester", 36528, 4, 104053, 259),
    ("netflix", 17742, 4, 153791, 296),
];

/// Renders one comparison line, e.g. `nltcs: model 812 edges, 9 layers |
/// LearnSPN 7509 edges, 4 layers | ResSPN-10 17102 edges, 169 layers`.
pub fn comparison_line(dataset: &str, stats: &StructureStats) -> String {
    let key = dataset.to_ascii_lowercase();
    match REFERENCE_STRUCTURES.iter().find(|r| r.0 == key) {
        Some((_, le, ll, re, rl)) => format!(
            "{dataset}: model {stats} | LearnSPN {le} edges, {ll} layers | ResSPN-10 {re} edges, {rl} layers"
        ),
        None => format!("{dataset}: model {stats}"),
    }
}
