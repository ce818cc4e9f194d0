//! Random networks and datasets for tests and benchmarks.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::BinaryDataset;
use crate::graph::{NodeId, SpnGraph};
use crate::scope::Scope;

#[derive(Debug, Clone)]
pub struct RandomSpnConfig {
    pub max_depth: usize,
    /// Probability of a sum node where a product or leaf is also possible.
    pub sum_prob: f64,
    pub max_children: usize,
    /// Probability of reusing an existing node with the required scope.
    pub share_prob: f64,
}

impl Default for RandomSpnConfig {
    fn default() -> Self {
        RandomSpnConfig {
            max_depth: 6,
            sum_prob: 0.5,
            max_children: 3,
            share_prob: 0.3,
        }
    }
}

struct Gen<'a, R> {
    graph: SpnGraph,
    pool: HashMap<Scope, Vec<NodeId>>,
    config: &'a RandomSpnConfig,
    rng: &'a mut R,
}

impl<R: Rng> Gen<'_, R> {
    fn node(&mut self, scope: &Scope, depth: usize) -> NodeId {
        if let Some(existing) = self.pool.get(scope) {
            if self.rng.gen_bool(self.config.share_prob) {
                return *existing.choose(self.rng).unwrap();
            }
        }
        let id = self.fresh(scope, depth);
        self.pool.entry(scope.clone()).or_default().push(id);
        id
    }

    fn fresh(&mut self, scope: &Scope, depth: usize) -> NodeId {
        let vars = scope.to_vec();
        let sum = depth < self.config.max_depth && self.rng.gen_bool(self.config.sum_prob);
        if sum {
            let k = self.rng.gen_range(2..=self.config.max_children.max(2));
            let mut children = Vec::with_capacity(k);
            for _ in 0..k {
                let c = self.node(scope, depth + 1);
                if !children.contains(&c) {
                    children.push(c);
                }
            }
            let weights = (0..children.len()).map(|_| self.rng.gen_range(0.05..1.0)).collect();
            return self.graph.add_sum(children, weights).unwrap();
        }
        if vars.len() == 1 {
            return self.graph.add_leaf(vars[0], self.rng.gen_range(0.02..0.98)).unwrap();
        }
        if depth >= self.config.max_depth {
            let leaves = vars
                .iter()
                .map(|&v| self.graph.add_leaf(v, self.rng.gen_range(0.02..0.98)).unwrap())
                .collect();
            return self.graph.add_product(leaves).unwrap();
        }
        let k = self.rng.gen_range(2..=self.config.max_children.max(2).min(vars.len()));
        let mut shuffled = vars.clone();
        shuffled.shuffle(self.rng);
        let mut parts = vec![Scope::empty(scope.universe()); k];
        for (i, v) in shuffled.into_iter().enumerate() {
            let part = if i < k { i } else { self.rng.gen_range(0..k) };
            parts[part].insert(v);
        }
        let children = parts.iter().map(|p| self.node(p, depth + 1)).collect();
        self.graph.add_product(children).unwrap()
    }
}

/// A random valid SPN over all `n_vars` variables, with shared subgraphs.
pub fn random_spn<R: Rng>(n_vars: usize, config: &RandomSpnConfig, rng: &mut R) -> SpnGraph {
    assert!(n_vars >= 1, "need at least one variable");
    let mut g = Gen {
        graph: SpnGraph::new(n_vars),
        pool: HashMap::new(),
        config,
        rng,
    };
    let root = g.fresh(&Scope::full(n_vars), 0);
    g.graph.set_root(root).unwrap();
    g.graph
}

/// Independent columns with a random rate each.
pub fn random_dataset<R: Rng>(n_rows: usize, n_vars: usize, rng: &mut R) -> BinaryDataset {
    let rates: Vec<f64> = (0..n_vars).map(|_| rng.gen_range(0.1..0.9)).collect();
    let mut values = Vec::with_capacity(n_rows * n_vars);
    for _ in 0..n_rows {
        for &p in &rates {
            values.push(rng.gen_bool(p) as u8);
        }
    }
    BinaryDataset::new(n_vars, values).expect("binary by construction")
}

/// Tree-shaped Bayesian network over binary variables: variable `v > 0`
/// depends on `parent[v] < v`.
#[derive(Debug, Clone)]
pub struct TreeBayesNet {
    pub parent: Vec<Option<usize>>,
    /// `p1[v][x_parent]` is `P(X_v = 1 | parent = x_parent)`; roots use index 0.
    pub p1: Vec<[f64; 2]>,
}

impl TreeBayesNet {
    pub fn random<R: Rng>(n_vars: usize, rng: &mut R) -> Self {
        let mut parent = Vec::with_capacity(n_vars);
        let mut p1 = Vec::with_capacity(n_vars);
        for v in 0..n_vars {
            if v == 0 || rng.gen_bool(0.15) {
                parent.push(None);
                let p = rng.gen_range(0.05..0.6);
                p1.push([p, p]);
            } else {
                parent.push(Some(rng.gen_range(0..v)));
                p1.push([rng.gen_range(0.02..0.4), rng.gen_range(0.5..0.98)]);
            }
        }
        TreeBayesNet { parent, p1 }
    }

    pub fn n_vars(&self) -> usize {
        self.parent.len()
    }

    pub fn sample<R: Rng>(&self, n_rows: usize, rng: &mut R) -> BinaryDataset {
        let n = self.n_vars();
        let mut values = vec![0u8; n_rows * n];
        for row in values.chunks_exact_mut(n.max(1)) {
            for v in 0..n {
                let pv = match self.parent[v] {
                    Some(u) => self.p1[v][row[u] as usize],
                    None => self.p1[v][0],
                };
                row[v] = rng.gen_bool(pv) as u8;
            }
        }
        BinaryDataset::new(n, values).expect("binary by construction")
    }

    /// Exact log-probability of a full assignment.
    pub fn log_prob(&self, row: &[u8]) -> f64 {
        (0..self.n_vars())
            .map(|v| {
                let pv = match self.parent[v] {
                    Some(u) => self.p1[v][row[u] as usize],
                    None => self.p1[v][0],
                };
                if row[v] == 1 {
                    pv.ln()
                } else {
                    (1.0 - pv).ln()
                }
            })
            .sum()
    }
}
