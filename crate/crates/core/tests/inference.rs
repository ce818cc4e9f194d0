mod common;

use common::{all_rows, enumerate_marginal, random_graph, rng};
use proptest::prelude::*;
use rand::Rng;
use spnforest::diagnostics::brute_force_marginal;
use spnforest::graph::merge_graphs;
use spnforest::prune::{prune_to_scope, prune_to_scope_cached, PruneCache};
use spnforest::validate::validate_from;
use spnforest::{Evidence, Scope, VarState};

fn random_evidence(n: usize, seed: u64) -> Evidence {
    let mut r = rng(seed);
    let mut ev = Evidence::marginalized(n);
    for v in 0..n {
        match r.gen_range(0..3) {
            0 => ev.set(v, VarState::Zero),
            1 => ev.set(v, VarState::One),
            _ => {}
        }
    }
    ev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn likelihoods_sum_to_one(n in 1usize..=10, seed in any::<u64>()) {
        let g = random_graph(n, seed);
        let total: f64 = all_rows(n).map(|r| g.log_likelihood(&r).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-6, "total {}", total);
        prop_assert!(g.log_marginal(&Evidence::marginalized(n)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_enumeration(n in 1usize..=10, seed in any::<u64>()) {
        let g = random_graph(n, seed);
        let ev = random_evidence(n, seed ^ 0x5eed);
        let fast = g.log_marginal(&ev).unwrap();
        let slow = enumerate_marginal(&g, &ev).ln();
        prop_assert!((fast - slow).abs() < 1e-8, "{} vs {}", fast, slow);
        let oracle = brute_force_marginal(&g, &ev).unwrap();
        prop_assert!((fast.exp() - oracle).abs() < 1e-9);
    }

    #[test]
    fn each_reachable_node_is_evaluated_once(n in 2usize..=10, seed in any::<u64>()) {
        let g = random_graph(n, seed);
        let root = g.root().unwrap();
        let values = g.node_values(root, &Evidence::marginalized(n)).unwrap();
        prop_assert_eq!(values.evaluated, g.topological_order(root).len());
    }

    #[test]
    fn pruned_node_equals_marginal(n in 2usize..=10, seed in any::<u64>()) {
        let mut g = random_graph(n, seed);
        let root = g.root().unwrap();
        let mut r = rng(seed.wrapping_add(1));
        let k = r.gen_range(1..=n.min(4));
        let mut vars: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(vars.as_mut_slice(), &mut r);
        let keep = Scope::from_indices(n, vars[..k].iter().copied());
        let pruned = prune_to_scope(&mut g, root, &keep).unwrap();
        prop_assert!(validate_from(&g, pruned).is_valid());
        prop_assert_eq!(g.scope(pruned), &keep);
        for bits in all_rows(k) {
            let obs: Vec<(usize, u8)> = vars[..k].iter().copied().zip(bits).collect();
            let ev = Evidence::with_observed(n, &obs);
            let direct = enumerate_marginal(&g, &ev).ln();
            let via = g.log_marginal_at(pruned, &ev).unwrap();
            prop_assert!((direct - via).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_preserves_node_values(seed in any::<u64>()) {
        let a = random_graph(6, seed);
        let b = random_graph(6, seed.wrapping_mul(31).wrapping_add(7));
        let (m, remap) = merge_graphs(&[&a, &b]).unwrap();
        prop_assert_eq!(m.len(), a.len() + b.len());
        prop_assert!(m.root().is_none());
        for row in all_rows(6) {
            let ev = Evidence::from_row(&row);
            for (g, map) in [(&a, &remap[0]), (&b, &remap[1])] {
                for (i, &mapped) in map.iter().enumerate() {
                    let id = spnforest::NodeId(i as u32);
                    let x = g.log_marginal_at(id, &ev).unwrap();
                    let y = m.log_marginal_at(mapped, &ev).unwrap();
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}

#[test]
fn merge_of_one_graph_is_identity() {
    let g = random_graph(5, 3);
    let (m, remap) = merge_graphs(&[&g]).unwrap();
    assert_eq!(m.nodes(), g.nodes());
    assert!(remap[0].iter().enumerate().all(|(i, id)| id.index() == i));
}

#[test]
fn merge_rejects_universe_mismatch() {
    let a = random_graph(5, 1);
    let b = random_graph(6, 1);
    assert!(merge_graphs(&[&a, &b]).is_err());
}

#[test]
fn ten_variable_subtree_pruned_to_four() {
    for seed in 0..20 {
        let mut g = random_graph(10, 100 + seed);
        let root = g.root().unwrap();
        let keep = Scope::from_indices(10, [1, 4, 6, 9]);
        let mut cache = PruneCache::new();
        let pruned = prune_to_scope_cached(&mut g, root, &keep, &mut cache).unwrap();
        for bits in 0..16u32 {
            let obs: Vec<(usize, u8)> = [1, 4, 6, 9].iter().enumerate().map(|(k, &v)| (v, ((bits >> k) & 1) as u8)).collect();
            let ev = Evidence::with_observed(10, &obs);
            let oracle = enumerate_marginal(&g, &ev).ln();
            assert!((g.log_marginal_at(pruned, &ev).unwrap() - oracle).abs() < 1e-9);
        }
        // A second identical request is served from the memo.
        assert_eq!(prune_to_scope_cached(&mut g, root, &keep, &mut cache).unwrap(), pruned);
    }
}
