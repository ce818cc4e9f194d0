//! Structural marginalization.
//!
//! Pruning a node to a scope `keep` removes every leaf outside `keep`, drops
//! product children that end up with nothing to contribute and collapses
//! single-child inner nodes. Because leaves integrate to one, the pruned
//! node computes exactly the marginal of the original over `keep`.
//! Subgraphs already inside `keep` are shared, not copied.

use std::collections::HashMap;

use crate::error::{Result, SpnError};
use crate::graph::{Node, NodeId, SpnGraph};
use crate::scope::Scope;

/// Memo of earlier prunes, valid while the pruned subgraphs are not mutated.
#[derive(Debug, Default, Clone)]
pub struct PruneCache {
    memo: HashMap<(NodeId, Scope), Option<NodeId>>,
}

impl PruneCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Returns a node over exactly `keep` that equals the marginal of `node`.
pub fn prune_to_scope(graph: &mut SpnGraph, node: NodeId, keep: &Scope) -> Result<NodeId> {
    prune_to_scope_cached(graph, node, keep, &mut PruneCache::new())
}

pub fn prune_to_scope_cached(graph: &mut SpnGraph, node: NodeId, keep: &Scope, cache: &mut PruneCache) -> Result<NodeId> {
    if !graph.contains(node) {
        return Err(SpnError::UnknownNode(node));
    }
    if keep.is_empty() {
        return Err(SpnError::Empty("scope to keep"));
    }
    if keep.universe() != graph.n_vars() || !keep.is_subset(graph.scope(node)) {
        return Err(SpnError::InvalidArgument(format!(
            "{keep:?} is not a subset of the scope of {node}"
        )));
    }
    Ok(prune_rec(graph, node, keep, cache)?.expect("keep intersects the node scope"))
}

fn prune_rec(graph: &mut SpnGraph, id: NodeId, keep: &Scope, cache: &mut PruneCache) -> Result<Option<NodeId>> {
    let scope = graph.scope(id);
    if scope.is_disjoint(keep) {
        return Ok(None);
    }
    if scope.is_subset(keep) {
        return Ok(Some(id));
    }
    let key = (id, keep.clone());
    if let Some(hit) = cache.memo.get(&key) {
        return Ok(*hit);
    }
    let mut created = false;
    let result = match graph.node(id).clone() {
        Node::Leaf { .. } => unreachable!("a leaf scope is either inside or outside keep"),
        Node::Product { children } => {
            let mut kept = Vec::with_capacity(children.len());
            for c in children {
                if let Some(p) = prune_rec(graph, c, keep, cache)? {
                    kept.push(p);
                }
            }
            if kept.len() == 1 {
                kept[0]
            } else {
                created = true;
                graph.add_product(kept)?
            }
        }
        Node::Sum { children, weights } => {
            // Distinct children may prune to the same node; merge their weights.
            let mut kept: Vec<NodeId> = Vec::with_capacity(children.len());
            let mut kept_w: Vec<f64> = Vec::with_capacity(children.len());
            for (c, w) in children.into_iter().zip(weights) {
                let p = prune_rec(graph, c, keep, cache)?.expect("sum children share the sum scope");
                match kept.iter().position(|k| *k == p) {
                    Some(i) => kept_w[i] += w,
                    None => {
                        kept.push(p);
                        kept_w.push(w);
                    }
                }
            }
            if kept.len() == 1 {
                kept[0]
            } else {
                created = true;
                graph.add_sum(kept, kept_w)?
            }
        }
    };
    if created {
        if let Some(slice) = graph.slice(id).cloned() {
            graph.set_slice(result, slice);
        }
    }
    cache.memo.insert(key, Some(result));
    Ok(Some(result))
}
