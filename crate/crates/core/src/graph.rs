//! Arena representation of sum-product networks.
//!
//! Nodes live in a flat `Vec` and refer to their children by [`NodeId`].
//! Every node carries a cached scope (the union of the variables in its
//! descendant leaves) and, for learned networks, the training rows it was
//! fitted on. Graphs built through the public constructors are acyclic by
//! construction: a node can only reference nodes that already exist, and the
//! one mutation that adds edges ([`SpnGraph::add_sum_child`]) rejects cycles.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::error::{Result, SpnError};
use crate::scope::{Scope, VarId};
use crate::LEAF_EPSILON;

/// Handle to a node inside one [`SpnGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Mixture of children. `weights` are linear-space and parallel to `children`.
    Sum {
        children: Vec<NodeId>,
        weights: Vec<f64>,
    },
    /// Factorization over children with disjoint scopes.
    Product { children: Vec<NodeId> },
    /// Bernoulli distribution with `p = P(var = 1)`.
    Leaf { var: VarId, p: f64 },
}

impl Node {
    pub fn children(&self) -> &[NodeId] {
        match self {
            Node::Sum { children, .. } | Node::Product { children } => children,
            Node::Leaf { .. } => &[],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Node::Sum { .. } => "sum",
            Node::Product { .. } => "product",
            Node::Leaf { .. } => "leaf",
        }
    }

    pub fn is_sum(&self) -> bool {
        matches!(self, Node::Sum { .. })
    }
}

/// Training rows a node was learned from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceInfo {
    rows: Arc<[u32]>,
}

impl SliceInfo {
    pub fn new(rows: Vec<u32>) -> Self {
        SliceInfo { rows: rows.into() }
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn count(&self) -> usize {
        self.rows.len()
    }
}

impl From<Arc<[u32]>> for SliceInfo {
    fn from(rows: Arc<[u32]>) -> Self {
        SliceInfo { rows }
    }
}

#[derive(Debug, Clone)]
pub struct SpnGraph {
    n_vars: usize,
    nodes: Vec<Node>,
    scopes: Vec<Scope>,
    slices: Vec<Option<SliceInfo>>,
    root: Option<NodeId>,
}

fn clamp_leaf(p: f64) -> f64 {
    p.clamp(LEAF_EPSILON, 1.0 - LEAF_EPSILON)
}

fn normalized_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SpnError::InvalidArgument(format!(
            "sum weights must be finite and non-negative: {weights:?}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(SpnError::InvalidArgument("sum weights add up to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

impl SpnGraph {
    pub fn new(n_vars: usize) -> Self {
        SpnGraph {
            n_vars,
            nodes: Vec::new(),
            scopes: Vec::new(),
            slices: Vec::new(),
            root: None,
        }
    }

    /// Assembles a graph from raw nodes without any checks beyond scope
    /// computation. Used by the model loader; the result must go through
    /// [`crate::validate::validate`] before evaluation.
    pub(crate) fn from_parts(n_vars: usize, nodes: Vec<Node>, root: Option<NodeId>) -> Self {
        let n = nodes.len();
        let mut graph = SpnGraph {
            n_vars,
            nodes,
            scopes: vec![Scope::empty(n_vars); n],
            slices: vec![None; n],
            root,
        };
        graph.scopes = graph.compute_scopes();
        graph
    }

    /// Recomputes every scope from the leaves up. Nodes on cycles or with
    /// dangling children get whatever their resolvable descendants give.
    pub(crate) fn compute_scopes(&self) -> Vec<Scope> {
        let n = self.nodes.len();
        let mut scopes = vec![Scope::empty(self.n_vars); n];
        let mut done = FixedBitSet::with_capacity(n);
        let mut on_stack = FixedBitSet::with_capacity(n);
        for start in 0..n {
            if done.contains(start) {
                continue;
            }
            // iterative post-order
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            on_stack.insert(start);
            while let Some(&mut (id, ref mut next)) = stack.last_mut() {
                let children = self.nodes[id].children();
                if *next < children.len() {
                    let c = children[*next].index();
                    *next += 1;
                    if c < n && !done.contains(c) && !on_stack.contains(c) {
                        on_stack.insert(c);
                        stack.push((c, 0));
                    }
                    continue;
                }
                let mut scope = Scope::empty(self.n_vars);
                match &self.nodes[id] {
                    Node::Leaf { var, .. } => {
                        if var.index() < self.n_vars {
                            scope.insert(*var);
                        }
                    }
                    node => {
                        for c in node.children() {
                            if let Some(s) = scopes.get(c.index()) {
                                scope.union_with(s);
                            }
                        }
                    }
                }
                scopes[id] = scope;
                done.insert(id);
                on_stack.set(id, false);
                stack.pop();
            }
        }
        scopes
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of nodes in the arena, reachable or not.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    pub fn scope(&self, id: NodeId) -> &Scope {
        &self.scopes[id.index()]
    }

    pub(crate) fn scopes(&self) -> &[Scope] {
        &self.scopes
    }

    pub fn slice(&self, id: NodeId) -> Option<&SliceInfo> {
        self.slices.get(id.index()).and_then(Option::as_ref)
    }

    pub fn set_slice(&mut self, id: NodeId, slice: SliceInfo) {
        self.slices[id.index()] = Some(slice);
    }

    pub fn has_slices(&self) -> bool {
        self.slices.iter().any(Option::is_some)
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn root_or_err(&self) -> Result<NodeId> {
        self.root.ok_or(SpnError::NoRoot)
    }

    pub fn set_root(&mut self, root: NodeId) -> Result<()> {
        self.check(root)?;
        self.root = Some(root);
        Ok(())
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(SpnError::UnknownNode(id))
        }
    }

    fn push(&mut self, node: Node, scope: Scope) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.scopes.push(scope);
        self.slices.push(None);
        id
    }

    /// Adds a Bernoulli leaf; `p` is clamped to `[ε, 1-ε]`.
    pub fn add_leaf(&mut self, var: VarId, p: f64) -> Result<NodeId> {
        if var.index() >= self.n_vars {
            return Err(SpnError::InvalidArgument(format!(
                "{var} outside universe of {} variables",
                self.n_vars
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(SpnError::InvalidArgument(format!("leaf probability {p} not in [0, 1]")));
        }
        let scope = Scope::singleton(self.n_vars, var);
        Ok(self.push(Node::Leaf { var, p: clamp_leaf(p) }, scope))
    }

    /// Adds a product node. Decomposability is not enforced here; see
    /// [`crate::validate::validate`].
    pub fn add_product(&mut self, children: Vec<NodeId>) -> Result<NodeId> {
        if children.is_empty() {
            return Err(SpnError::Empty("product children"));
        }
        let scope = self.union_scope(&children)?;
        Ok(self.push(Node::Product { children }, scope))
    }

    /// Adds a sum node; weights are renormalized to sum to one.
    pub fn add_sum(&mut self, children: Vec<NodeId>, weights: Vec<f64>) -> Result<NodeId> {
        if children.is_empty() {
            return Err(SpnError::Empty("sum children"));
        }
        if children.len() != weights.len() {
            return Err(SpnError::InvalidArgument(format!(
                "{} children but {} weights",
                children.len(),
                weights.len()
            )));
        }
        let weights = normalized_weights(&weights)?;
        let scope = self.union_scope(&children)?;
        Ok(self.push(Node::Sum { children, weights }, scope))
    }

    fn union_scope(&self, children: &[NodeId]) -> Result<Scope> {
        let mut scope = Scope::empty(self.n_vars);
        for &c in children {
            self.check(c)?;
            scope.union_with(self.scope(c));
        }
        Ok(scope)
    }

    /// Appends `child` to sum node `sum` with weight `weight`, scaling the
    /// existing weights by `1 - weight`.
    pub fn add_sum_child(&mut self, sum: NodeId, child: NodeId, weight: f64) -> Result<()> {
        self.check(sum)?;
        self.check(child)?;
        if !(weight > 0.0 && weight < 1.0) {
            return Err(SpnError::InvalidArgument(format!(
                "new child weight {weight} not in (0, 1)"
            )));
        }
        if !self.nodes[sum.index()].is_sum() {
            return Err(SpnError::WrongNodeKind { node: sum, expected: "sum" });
        }
        if self.scope(sum) != self.scope(child) {
            return Err(SpnError::ScopeMismatch { parent: sum, child });
        }
        if child == sum || self.is_reachable(child, sum) {
            return Err(SpnError::Cycle { parent: sum, child });
        }
        if let Node::Sum { children, weights } = &mut self.nodes[sum.index()] {
            for w in weights.iter_mut() {
                *w *= 1.0 - weight;
            }
            children.push(child);
            weights.push(weight);
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(())
    }

    /// Replaces the weights of a sum node (renormalized).
    pub fn set_sum_weights(&mut self, sum: NodeId, new_weights: &[f64]) -> Result<()> {
        self.check(sum)?;
        match &mut self.nodes[sum.index()] {
            Node::Sum { children, weights } => {
                if children.len() != new_weights.len() {
                    return Err(SpnError::InvalidArgument(format!(
                        "{} children but {} weights",
                        children.len(),
                        new_weights.len()
                    )));
                }
                *weights = normalized_weights(new_weights)?;
                Ok(())
            }
            _ => Err(SpnError::WrongNodeKind { node: sum, expected: "sum" }),
        }
    }

    pub fn set_leaf_p(&mut self, leaf: NodeId, new_p: f64) -> Result<()> {
        self.check(leaf)?;
        if !(0.0..=1.0).contains(&new_p) {
            return Err(SpnError::InvalidArgument(format!("leaf probability {new_p} not in [0, 1]")));
        }
        match &mut self.nodes[leaf.index()] {
            Node::Leaf { p, .. } => {
                *p = clamp_leaf(new_p);
                Ok(())
            }
            _ => Err(SpnError::WrongNodeKind { node: leaf, expected: "leaf" }),
        }
    }

    /// Overwrites the child list of a sum node. Callers restore a snapshot
    /// taken from the same node, so no further checks are made.
    pub(crate) fn restore_sum(&mut self, sum: NodeId, children: Vec<NodeId>, weights: Vec<f64>) {
        self.nodes[sum.index()] = Node::Sum { children, weights };
    }

    /// Whether `to` is reachable from `from` (a node reaches itself).
    pub fn is_reachable(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = FixedBitSet::with_capacity(self.nodes.len());
        let mut stack = vec![from];
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if seen.put(id.index()) {
                continue;
            }
            stack.extend(self.nodes[id.index()].children().iter().copied());
        }
        false
    }

    /// Nodes reachable from `start`, children before parents, in depth-first
    /// post-order following stored child order. Back edges are ignored.
    pub fn topological_order(&self, start: NodeId) -> Vec<NodeId> {
        let n = self.nodes.len();
        let mut visited = FixedBitSet::with_capacity(n);
        let mut order = Vec::new();
        let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
        visited.insert(start.index());
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            let children = self.nodes[id.index()].children();
            if *next < children.len() {
                let c = children[*next];
                *next += 1;
                if c.index() < n && !visited.put(c.index()) {
                    stack.push((c, 0));
                }
            } else {
                order.push(id);
                stack.pop();
            }
        }
        order
    }

    /// Breadth-first order from `start`; each reachable node appears once.
    pub fn bfs(&self, start: NodeId) -> Vec<NodeId> {
        let mut visited = FixedBitSet::with_capacity(self.nodes.len());
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        visited.insert(start.index());
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for &c in self.nodes[id.index()].children() {
                if !visited.put(c.index()) {
                    queue.push_back(c);
                }
            }
        }
        order
    }

    /// Copies the subgraphs reachable from `roots` into a fresh arena in
    /// topological order, collapsing sums and products with a single child.
    /// Returns the new graph (rooted at the image of `roots[0]` when given)
    /// and the old-to-new id map for surviving nodes.
    pub fn compacted(&self, roots: &[NodeId]) -> (SpnGraph, Vec<Option<NodeId>>) {
        let mut out = SpnGraph::new(self.n_vars);
        let mut map: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        for &r in roots {
            for id in self.topological_order(r) {
                if map[id.index()].is_some() {
                    continue;
                }
                let node = &self.nodes[id.index()];
                let new_id = match node {
                    Node::Sum { children, .. } | Node::Product { children } if children.len() == 1 => {
                        map[children[0].index()].expect("child mapped before parent")
                    }
                    Node::Sum { children, weights } => out.push(
                        Node::Sum {
                            children: children.iter().map(|c| map[c.index()].unwrap()).collect(),
                            weights: weights.clone(),
                        },
                        self.scopes[id.index()].clone(),
                    ),
                    Node::Product { children } => out.push(
                        Node::Product {
                            children: children.iter().map(|c| map[c.index()].unwrap()).collect(),
                        },
                        self.scopes[id.index()].clone(),
                    ),
                    Node::Leaf { .. } => out.push(node.clone(), self.scopes[id.index()].clone()),
                };
                if out.slices[new_id.index()].is_none() {
                    out.slices[new_id.index()] = self.slices[id.index()].clone();
                }
                map[id.index()] = Some(new_id);
            }
        }
        out.root = roots.first().and_then(|r| map[r.index()]);
        (out, map)
    }

    /// Appends every node of `other` to this arena, returning the id remap.
    pub fn append(&mut self, other: &SpnGraph) -> Result<Vec<NodeId>> {
        if other.n_vars != self.n_vars {
            return Err(SpnError::UniverseMismatch {
                expected: self.n_vars,
                got: other.n_vars,
            });
        }
        let offset = self.nodes.len() as u32;
        let shift = |c: &NodeId| NodeId(c.0 + offset);
        for node in &other.nodes {
            self.nodes.push(match node {
                Node::Sum { children, weights } => Node::Sum {
                    children: children.iter().map(shift).collect(),
                    weights: weights.clone(),
                },
                Node::Product { children } => Node::Product {
                    children: children.iter().map(shift).collect(),
                },
                Node::Leaf { var, p } => Node::Leaf { var: *var, p: *p },
            });
        }
        self.scopes.extend(other.scopes.iter().cloned());
        self.slices.extend(other.slices.iter().cloned());
        Ok((0..other.nodes.len() as u32).map(|i| NodeId(i + offset)).collect())
    }
}

/// Places all input graphs into one arena without designating a root.
/// `remap[i][old.index()]` is the new id of node `old` of input `i`.
pub fn merge_graphs(graphs: &[&SpnGraph]) -> Result<(SpnGraph, Vec<Vec<NodeId>>)> {
    let first = graphs.first().ok_or(SpnError::Empty("graph list"))?;
    let mut merged = SpnGraph::new(first.n_vars);
    let mut remaps = Vec::with_capacity(graphs.len());
    for g in graphs {
        remaps.push(merged.append(g)?);
    }
    Ok((merged, remaps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf_product() -> (SpnGraph, NodeId) {
        let mut g = SpnGraph::new(2);
        let a = g.add_leaf(VarId(0), 0.5).unwrap();
        let b = g.add_leaf(VarId(1), 0.5).unwrap();
        let p = g.add_product(vec![a, b]).unwrap();
        g.set_root(p).unwrap();
        (g, p)
    }

    #[test]
    fn scopes_are_cached_on_construction() {
        let (g, p) = two_leaf_product();
        assert_eq!(g.scope(p), &Scope::full(2));
        assert_eq!(g.scope(NodeId(0)).to_vec(), vec![VarId(0)]);
    }

    #[test]
    fn leaf_probabilities_are_clamped() {
        let mut g = SpnGraph::new(1);
        let a = g.add_leaf(VarId(0), 1.0).unwrap();
        match g.node(a) {
            Node::Leaf { p, .. } => assert_eq!(*p, 1.0 - LEAF_EPSILON),
            _ => unreachable!(),
        }
        assert!(g.add_leaf(VarId(1), 0.5).is_err());
        assert!(g.add_leaf(VarId(0), 1.5).is_err());
    }

    #[test]
    fn add_sum_renormalizes() {
        let mut g = SpnGraph::new(1);
        let a = g.add_leaf(VarId(0), 0.2).unwrap();
        let b = g.add_leaf(VarId(0), 0.7).unwrap();
        let s = g.add_sum(vec![a, b], vec![3.0, 1.0]).unwrap();
        match g.node(s) {
            Node::Sum { weights, .. } => assert_eq!(weights, &vec![0.75, 0.25]),
            _ => unreachable!(),
        }
        assert!(g.add_sum(vec![a], vec![0.0]).is_err());
        assert!(g.add_sum(vec![a, b], vec![1.0]).is_err());
    }

    #[test]
    fn add_sum_child_rescales_and_rejects_cycles() {
        let mut g = SpnGraph::new(1);
        let a = g.add_leaf(VarId(0), 0.2).unwrap();
        let b = g.add_leaf(VarId(0), 0.7).unwrap();
        let s = g.add_sum(vec![a], vec![1.0]).unwrap();
        let t = g.add_sum(vec![s, b], vec![0.5, 0.5]).unwrap();
        g.add_sum_child(s, b, 0.25).unwrap();
        match g.node(s) {
            Node::Sum { weights, .. } => assert_eq!(weights, &vec![0.75, 0.25]),
            _ => unreachable!(),
        }
        assert!(matches!(g.add_sum_child(s, t, 0.5), Err(SpnError::Cycle { .. })));
        let mut h = SpnGraph::new(2);
        let x = h.add_leaf(VarId(0), 0.5).unwrap();
        let y = h.add_leaf(VarId(1), 0.5).unwrap();
        let s = h.add_sum(vec![x], vec![1.0]).unwrap();
        assert!(matches!(h.add_sum_child(s, y, 0.5), Err(SpnError::ScopeMismatch { .. })));
    }

    #[test]
    fn merge_of_one_graph_is_identity() {
        let (g, _) = two_leaf_product();
        let (m, remap) = merge_graphs(&[&g]).unwrap();
        assert_eq!(remap[0], (0..3).map(NodeId).collect::<Vec<_>>());
        assert_eq!(m.nodes(), g.nodes());
        assert_eq!(m.root(), None);
    }

    #[test]
    fn merge_of_two_graphs_sums_node_counts() {
        let (g, _) = two_leaf_product();
        let (h, _) = two_leaf_product();
        let (m, remap) = merge_graphs(&[&g, &h]).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.node(remap[1][2]).children(), &[NodeId(3), NodeId(4)]);
        let other = SpnGraph::new(3);
        assert!(matches!(
            merge_graphs(&[&g, &other]),
            Err(SpnError::UniverseMismatch { .. })
        ));
    }

    #[test]
    fn traversal_orders() {
        let (g, p) = two_leaf_product();
        assert_eq!(g.topological_order(p), vec![NodeId(0), NodeId(1), p]);
        assert_eq!(g.bfs(p), vec![p, NodeId(0), NodeId(1)]);
    }

    #[test]
    fn compaction_collapses_single_child_nodes() {
        let mut g = SpnGraph::new(2);
        let a = g.add_leaf(VarId(0), 0.3).unwrap();
        let b = g.add_leaf(VarId(1), 0.6).unwrap();
        let single = g.add_product(vec![a]).unwrap();
        let _unused = g.add_leaf(VarId(1), 0.9).unwrap();
        let p = g.add_product(vec![single, b]).unwrap();
        let s = g.add_sum(vec![p], vec![1.0]).unwrap();
        let (c, map) = g.compacted(&[s]);
        assert_eq!(c.len(), 3);
        assert_eq!(map[s.index()], map[p.index()]);
        assert_eq!(c.node(c.root().unwrap()).children(), &[NodeId(0), NodeId(1)]);
    }
}
