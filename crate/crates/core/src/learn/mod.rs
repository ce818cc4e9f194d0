//! Top-down structure learning.
//!
//! [`learn_extra_spn`] grows an extremely randomized SPN: at every step a
//! coin with failure probability `beta` decides whether the variables are
//! split into two random groups (product node) or the rows are clustered in
//! two (sum node with weights equal to the cluster fractions). Recursion
//! stops at single variables (Bernoulli leaf) or when fewer than `mu` rows
//! remain (full factorization). Every node records the training rows it was
//! fitted on.

mod cluster;
mod split;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BinaryDataset;
use crate::error::{Result, SpnError};
use crate::graph::{NodeId, SliceInfo, SpnGraph};
use crate::scope::{Scope, VarId};
use crate::LEAF_EPSILON;

pub use cluster::{cluster_instances, kmeans_objective, ClusterOutcome};
pub use split::{g_statistic, g_test_split_features, random_split_features};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    /// Uniform random assignment of rows to two groups.
    Random,
    /// 2-means on rows as 0/1 vectors.
    KMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Random bipartition guarded by the `beta` failure coin.
    Random,
    /// Connected components of the pairwise G-test dependency graph.
    GTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Minimum number of rows needed to keep splitting.
    pub mu: usize,
    /// Probability that a feature split (and, in random clustering, a row
    /// clustering) fails.
    pub beta: f64,
    /// Shrink factor for the range `[1, n_rows / gamma]` that `mu` is drawn from.
    pub gamma: f64,
    /// Laplace pseudo-count for leaf estimates.
    pub alpha: f64,
    pub cluster_mode: ClusterMode,
    pub split_mode: SplitMode,
    /// Raw G-statistic cutoff for [`SplitMode::GTest`].
    pub rho: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            mu: 100,
            beta: 0.6,
            gamma: 5.0,
            alpha: 1.0,
            cluster_mode: ClusterMode::Random,
            split_mode: SplitMode::Random,
            rho: 10.83,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(SpnError::InvalidArgument(format!("beta {} not in [0, 1]", self.beta)));
        }
        if !(self.gamma >= 1.0) {
            return Err(SpnError::InvalidArgument(format!("gamma {} < 1", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(SpnError::InvalidArgument(format!("alpha {} < 0", self.alpha)));
        }
        if self.mu < 1 {
            return Err(SpnError::InvalidArgument("mu must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniform draw from `[1, floor(n_rows / gamma)]`, clamped to at least 1.
pub fn sample_mu<R: Rng>(n_rows: usize, gamma: f64, rng: &mut R) -> usize {
    let hi = ((n_rows as f64 / gamma).floor() as usize).max(1);
    rng.gen_range(1..=hi)
}

/// `(ones + alpha) / (n + 2 alpha)` over `rows`, clamped to `[ε, 1-ε]`.
/// With no rows and no smoothing the estimate is 1/2.
pub fn univariate_leaf_p(data: &BinaryDataset, rows: &[u32], var: VarId, alpha: f64) -> f64 {
    let ones = rows.iter().filter(|&&r| data.get(r as usize, var.index()) == 1).count() as f64;
    let denom = rows.len() as f64 + 2.0 * alpha;
    let p = if denom > 0.0 { (ones + alpha) / denom } else { 0.5 };
    p.clamp(LEAF_EPSILON, 1.0 - LEAF_EPSILON)
}

pub fn univariate_leaf(graph: &mut SpnGraph, data: &BinaryDataset, rows: &[u32], var: VarId, alpha: f64) -> Result<NodeId> {
    graph.add_leaf(var, univariate_leaf_p(data, rows, var, alpha))
}

/// Product of independent leaves over `vars`; a single variable gives the leaf.
pub fn full_factorization(graph: &mut SpnGraph, data: &BinaryDataset, rows: &[u32], vars: &Scope, alpha: f64) -> Result<NodeId> {
    if vars.is_empty() {
        return Err(SpnError::Empty("variables"));
    }
    let leaves = vars
        .iter()
        .map(|v| univariate_leaf(graph, data, rows, v, alpha))
        .collect::<Result<Vec<_>>>()?;
    if leaves.len() == 1 {
        Ok(leaves[0])
    } else {
        graph.add_product(leaves)
    }
}

enum Pending {
    Product,
    Sum { counts: Vec<f64> },
}

struct Frame {
    kind: Pending,
    rows: Arc<[u32]>,
    todo: Vec<(Arc<[u32]>, Scope)>,
    built: Vec<NodeId>,
}

enum Step {
    Done(NodeId),
    Expand(Frame),
}

struct Learner<'a> {
    data: &'a BinaryDataset,
    config: &'a LearnConfig,
    rng: ChaCha8Rng,
    graph: SpnGraph,
}

impl Learner<'_> {
    fn terminal(&mut self, rows: &Arc<[u32]>, vars: &Scope) -> Result<NodeId> {
        let id = full_factorization(&mut self.graph, self.data, rows, vars, self.config.alpha)?;
        self.mark(id, rows);
        if let crate::graph::Node::Product { children } = self.graph.node(id).clone() {
            for c in children {
                self.mark(c, rows);
            }
        }
        Ok(id)
    }

    fn mark(&mut self, id: NodeId, rows: &Arc<[u32]>) {
        self.graph.set_slice(id, SliceInfo::from(rows.clone()));
    }

    fn product_frame(rows: Arc<[u32]>, groups: Vec<Scope>) -> Frame {
        let mut todo: Vec<(Arc<[u32]>, Scope)> = groups.into_iter().map(|g| (rows.clone(), g)).collect();
        todo.reverse();
        Frame {
            kind: Pending::Product,
            rows,
            todo,
            built: Vec::new(),
        }
    }

    fn step(&mut self, rows: Arc<[u32]>, vars: Scope) -> Result<Step> {
        if vars.len() == 1 || rows.len() < self.config.mu {
            return Ok(Step::Done(self.terminal(&rows, &vars)?));
        }
        let groups = match self.config.split_mode {
            SplitMode::Random => {
                let (a, b) = random_split_features(&vars, self.config.beta, &mut self.rng)?;
                if b.is_empty() {
                    vec![a]
                } else {
                    vec![a, b]
                }
            }
            SplitMode::GTest => g_test_split_features(self.data, &rows, &vars, self.config.rho)?,
        };
        if groups.len() > 1 {
            return Ok(Step::Expand(Self::product_frame(rows, groups)));
        }
        if rows.len() < 2 {
            // A single row cannot be clustered; its factorization is exact.
            return Ok(Step::Done(self.terminal(&rows, &vars)?));
        }
        match cluster_instances(self.data, &rows, &vars, self.config.cluster_mode, self.config.beta, &mut self.rng)? {
            ClusterOutcome::Groups(parts) => {
                let counts = parts.iter().map(|p| p.len() as f64).collect();
                let mut todo: Vec<(Arc<[u32]>, Scope)> =
                    parts.into_iter().map(|p| (Arc::from(p), vars.clone())).collect();
                todo.reverse();
                Ok(Step::Expand(Frame {
                    kind: Pending::Sum { counts },
                    rows,
                    todo,
                    built: Vec::new(),
                }))
            }
            ClusterOutcome::Failed => {
                let (a, b) = random_split_features(&vars, 0.0, &mut self.rng)?;
                Ok(Step::Expand(Self::product_frame(rows, vec![a, b])))
            }
        }
    }

    fn finish(&mut self, frame: Frame) -> Result<NodeId> {
        let id = match frame.kind {
            Pending::Product => self.graph.add_product(frame.built)?,
            Pending::Sum { counts } => self.graph.add_sum(frame.built, counts)?,
        };
        self.mark(id, &frame.rows);
        Ok(id)
    }

    fn run(&mut self, rows: Arc<[u32]>, vars: Scope) -> Result<NodeId> {
        let mut stack = match self.step(rows, vars)? {
            Step::Done(id) => return Ok(id),
            Step::Expand(f) => vec![f],
        };
        loop {
            let top = stack.last_mut().expect("stack is non-empty inside the loop");
            if let Some((rows, vars)) = top.todo.pop() {
                match self.step(rows, vars)? {
                    Step::Done(id) => stack.last_mut().unwrap().built.push(id),
                    Step::Expand(f) => stack.push(f),
                }
                continue;
            }
            let frame = stack.pop().unwrap();
            let id = self.finish(frame)?;
            match stack.last_mut() {
                Some(parent) => parent.built.push(id),
                None => return Ok(id),
            }
        }
    }
}

/// Learns an ExtraSPN over `vars` from all rows of `data`.
pub fn learn_extra_spn(data: &BinaryDataset, vars: &Scope, config: &LearnConfig) -> Result<SpnGraph> {
    config.check()?;
    if data.n_rows() == 0 {
        return Err(SpnError::Empty("training data"));
    }
    if vars.is_empty() {
        return Err(SpnError::Empty("variables"));
    }
    if vars.universe() != data.n_cols() {
        return Err(SpnError::UniverseMismatch {
            expected: data.n_cols(),
            got: vars.universe(),
        });
    }
    let mut learner = Learner {
        data,
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        graph: SpnGraph::new(data.n_cols()),
    };
    let rows: Arc<[u32]> = (0..data.n_rows() as u32).collect();
    let root = learner.run(rows, vars.clone())?;
    learner.graph.set_root(root)?;
    Ok(learner.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::validate::validate;

    fn toy_data() -> BinaryDataset {
        let rows: Vec<Vec<u8>> = (0..40u32)
            .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 5 < 2) as u8).collect())
            .collect();
        BinaryDataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn leaf_estimates() {
        let rows: Vec<Vec<u8>> = (0..10).map(|i| vec![(i < 7) as u8]).collect();
        let d = BinaryDataset::from_rows(&rows).unwrap();
        let all: Vec<u32> = (0..10).collect();
        assert!((univariate_leaf_p(&d, &all, VarId(0), 0.0) - 0.7).abs() < 1e-15);
        assert_eq!(univariate_leaf_p(&d, &[], VarId(0), 1.0), 0.5);
        let zeros: Vec<u32> = (7..10).collect();
        assert!((univariate_leaf_p(&d, &zeros, VarId(0), 1.0) - 1.0 / 5.0).abs() < 1e-15);
        let none: Vec<Vec<u8>> = vec![vec![0]; 10];
        let d0 = BinaryDataset::from_rows(&none).unwrap();
        assert!((univariate_leaf_p(&d0, &all, VarId(0), 1.0) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(univariate_leaf_p(&d0, &all, VarId(0), 0.0), LEAF_EPSILON);
    }

    #[test]
    fn single_variable_gives_a_leaf() {
        let d = toy_data();
        let vars = Scope::from_indices(5, [2]);
        let g = learn_extra_spn(&d, &vars, &LearnConfig::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert!(matches!(g.node(g.root().unwrap()), Node::Leaf { var: VarId(2), .. }));
    }

    #[test]
    fn mu_above_row_count_gives_full_factorization() {
        let d = toy_data();
        let config = LearnConfig { mu: 1000, ..LearnConfig::default() };
        let g = learn_extra_spn(&d, &Scope::full(5), &config).unwrap();
        let root = g.root().unwrap();
        match g.node(root) {
            Node::Product { children } => {
                assert_eq!(children.len(), 5);
                assert!(children.iter().all(|c| matches!(g.node(*c), Node::Leaf { .. })));
            }
            other => panic!("expected product, got {other:?}"),
        }
    }

    #[test]
    fn beta_zero_root_is_product() {
        let d = toy_data();
        for seed in 0..20 {
            let config = LearnConfig { mu: 2, beta: 0.0, seed, ..LearnConfig::default() };
            let g = learn_extra_spn(&d, &Scope::full(5), &config).unwrap();
            assert!(matches!(g.node(g.root().unwrap()), Node::Product { .. }));
            assert!(validate(&g).is_valid());
        }
    }

    #[test]
    fn errors_on_empty_inputs() {
        let d = toy_data();
        assert!(matches!(
            learn_extra_spn(&d, &Scope::empty(5), &LearnConfig::default()),
            Err(SpnError::Empty(_))
        ));
        let bad = LearnConfig { beta: 1.5, ..LearnConfig::default() };
        assert!(learn_extra_spn(&d, &Scope::full(5), &bad).is_err());
        let empty = BinaryDataset::new(5, vec![]).unwrap();
        assert!(learn_extra_spn(&empty, &Scope::full(5), &LearnConfig::default()).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let d = toy_data();
        let config = LearnConfig { mu: 3, seed: 11, ..LearnConfig::default() };
        let a = learn_extra_spn(&d, &Scope::full(5), &config).unwrap();
        let b = learn_extra_spn(&d, &Scope::full(5), &config).unwrap();
        assert_eq!(a.nodes(), b.nodes());
    }

    #[test]
    fn sample_mu_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let mu = sample_mu(16181, 5.0, &mut rng);
            assert!((1..=3236).contains(&mu));
        }
        for _ in 0..100 {
            assert_eq!(sample_mu(100, 100.0, &mut rng), 1);
            assert_eq!(sample_mu(3, 10.0, &mut rng), 1);
        }
    }
}
