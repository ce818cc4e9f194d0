mod common;

use common::{enumerate_marginal, rng};
use proptest::prelude::*;
use rand::Rng;
use spnforest::learn::{
    full_factorization, learn_extra_spn, sample_mu, univariate_leaf_p, ClusterMode, LearnConfig, SplitMode,
};
use spnforest::synthetic::{random_dataset, TreeBayesNet};
use spnforest::validate::validate;
use spnforest::{BinaryDataset, Evidence, Node, NodeId, Scope, SpnGraph, VarId};

fn check_slices(g: &SpnGraph, n_rows: usize) {
    let root = g.root().unwrap();
    let root_rows = g.slice(root).unwrap().rows();
    assert_eq!(root_rows, (0..n_rows as u32).collect::<Vec<_>>().as_slice());
    for id in g.topological_order(root) {
        let rows = g.slice(id).expect("every learned node has a slice").rows();
        match g.node(id) {
            Node::Product { children } => {
                for c in children {
                    assert_eq!(g.slice(*c).unwrap().rows(), rows);
                }
            }
            Node::Sum { children, weights } => {
                let mut union: Vec<u32> = Vec::new();
                for (c, w) in children.iter().zip(weights) {
                    let cr = g.slice(*c).unwrap().rows();
                    assert_eq!(*w, cr.len() as f64 / rows.len() as f64, "weight must equal the slice fraction");
                    union.extend_from_slice(cr);
                }
                union.sort_unstable();
                let mut expected = rows.to_vec();
                expected.sort_unstable();
                assert_eq!(union, expected, "sum children partition the parent slice");
            }
            Node::Leaf { .. } => {}
        }
    }
}

fn tree_data(n_vars: usize, n_rows: usize, seed: u64) -> BinaryDataset {
    let mut r = rng(seed);
    TreeBayesNet::random(n_vars, &mut r).sample(n_rows, &mut r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn learned_networks_are_valid_with_consistent_slices(
        n in 2usize..=12,
        rows in 2usize..200,
        beta in 0.0f64..=1.0,
        kmeans in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let data = tree_data(n, rows, seed);
        let mut r = rng(seed);
        let config = LearnConfig {
            mu: sample_mu(rows, 5.0, &mut r),
            beta,
            cluster_mode: if kmeans { ClusterMode::KMeans } else { ClusterMode::Random },
            seed,
            ..LearnConfig::default()
        };
        let g = learn_extra_spn(&data, &Scope::full(n), &config).unwrap();
        prop_assert!(validate(&g).is_valid());
        prop_assert_eq!(g.scope(g.root().unwrap()), &Scope::full(n));
        check_slices(&g, rows);
    }

    #[test]
    fn g_test_mode_is_valid(n in 2usize..=10, seed in any::<u64>()) {
        let data = tree_data(n, 300, seed);
        let config = LearnConfig { mu: 30, split_mode: SplitMode::GTest, seed, ..LearnConfig::default() };
        let g = learn_extra_spn(&data, &Scope::full(n), &config).unwrap();
        prop_assert!(validate(&g).is_valid());
        check_slices(&g, 300);
    }
}

#[test]
fn eight_variable_marginals_match_enumeration() {
    for seed in 0..20 {
        let data = tree_data(8, 400, seed);
        let config = LearnConfig { mu: 10, seed, ..LearnConfig::default() };
        let g = learn_extra_spn(&data, &Scope::full(8), &config).unwrap();
        let mut r = rng(seed);
        let mut vars: Vec<usize> = (0..8).collect();
        rand::seq::SliceRandom::shuffle(vars.as_mut_slice(), &mut r);
        let obs: Vec<(usize, u8)> = vars[..3].iter().map(|&v| (v, r.gen_range(0..2))).collect();
        let ev = Evidence::with_observed(8, &obs);
        let oracle = enumerate_marginal(&g, &ev).ln();
        assert!((g.log_marginal(&ev).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn nltcs_shaped_run_has_slice_fraction_weights() {
    let data = tree_data(16, 16181, 77);
    let mut r = rng(77);
    let config = LearnConfig { mu: sample_mu(16181, 5.0, &mut r), beta: 0.6, seed: 77, ..LearnConfig::default() };
    assert!((1..=3236).contains(&config.mu));
    let g = learn_extra_spn(&data, &Scope::full(16), &config).unwrap();
    assert!(validate(&g).is_valid());
    check_slices(&g, 16181);
}

#[test]
fn sample_mu_is_uniform() {
    let mut r = rng(5);
    let draws = 10_000;
    let mean = (0..draws).map(|_| sample_mu(100, 1.0, &mut r) as f64).sum::<f64>() / draws as f64;
    assert!((mean - 50.5).abs() < 1.5, "mean {mean}");
    assert!((0..1000).all(|_| sample_mu(100, 100.0, &mut r) == 1));
}

#[test]
fn full_factorization_of_independent_data() {
    let data = random_dataset(500, 2, &mut rng(8));
    let rows: Vec<u32> = (0..500).collect();
    let mut g = SpnGraph::new(2);
    let root = full_factorization(&mut g, &data, &rows, &Scope::full(2), 1.0).unwrap();
    g.set_root(root).unwrap();
    assert!(validate(&g).is_valid());
    let p: Vec<f64> = (0..2).map(|v| univariate_leaf_p(&data, &rows, VarId(v), 1.0)).collect();
    for row in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
        let expected: f64 = (0..2).map(|v| if row[v] == 1 { p[v].ln() } else { (1.0 - p[v]).ln() }).sum();
        assert!((g.log_likelihood(&row).unwrap() - expected).abs() < 1e-12);
    }
    let mut single = SpnGraph::new(2);
    let leaf = full_factorization(&mut single, &data, &rows, &Scope::from_indices(2, [1]), 1.0).unwrap();
    assert!(matches!(single.node(leaf), Node::Leaf { var: VarId(1), .. }));
    assert_eq!(leaf, NodeId(0));
}

#[test]
fn beta_one_still_terminates() {
    let data = tree_data(10, 200, 9);
    let config = LearnConfig { mu: 1, beta: 1.0, seed: 9, ..LearnConfig::default() };
    let g = learn_extra_spn(&data, &Scope::full(10), &config).unwrap();
    assert!(validate(&g).is_valid());
}
