mod common;

use common::{random_graph, rng};
use proptest::prelude::*;
use rand::Rng;
use spnforest::diagnostics::{
    brute_force_joint, brute_force_marginal, empirical_pairwise_mi, mi_gap, model_pairwise_mi, MiMatrix,
};
use spnforest::synthetic::TreeBayesNet;
use spnforest::{BinaryDataset, Evidence, VarState};

/// Two-pass histogram MI: count each pair's cells separately.
fn histogram_mi(data: &BinaryDataset, i: usize, j: usize, alpha: f64) -> f64 {
    let mut cells = [[alpha; 2]; 2];
    for row in data.rows() {
        cells[row[i] as usize][row[j] as usize] += 1.0;
    }
    let total: f64 = cells.iter().flatten().sum();
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let p = cells[a][b] / total;
            let pa = (cells[a][0] + cells[a][1]) / total;
            let pb = (cells[0][b] + cells[1][b]) / total;
            if p > 0.0 {
                mi += p * (p / (pa * pb)).ln();
            }
        }
    }
    mi
}

fn mi_from_joint(joint: &[f64], i: usize, j: usize) -> f64 {
    let mut p = [[0.0; 2]; 2];
    for (m, q) in joint.iter().enumerate() {
        p[(m >> i) & 1][(m >> j) & 1] += q;
    }
    spnforest::diagnostics::mutual_information(p)
}

#[test]
fn empirical_mi_matches_histogram() {
    let mut r = rng(3);
    let data = TreeBayesNet::random(8, &mut r).sample(500, &mut r);
    let m = empirical_pairwise_mi(&data, 0.5);
    for i in 0..8 {
        for j in 0..8 {
            let expected = if i == j { 0.0 } else { histogram_mi(&data, i, j, 0.5) };
            assert!((m.get(i, j) - expected).abs() < 1e-12);
            assert!(m.get(i, j) >= -1e-12);
            assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_mi_matches_enumerated_joint(seed in any::<u64>()) {
        let g = random_graph(10, seed);
        let m = model_pairwise_mi(&g).unwrap();
        let joint = brute_force_joint(&g).unwrap();
        for i in 0..10 {
            for j in i + 1..10 {
                prop_assert!((m.get(i, j) - mi_from_joint(&joint, i, j)).abs() < 1e-8);
                prop_assert!(m.get(i, j) >= -1e-10);
            }
        }
    }

    #[test]
    fn oracle_agrees_with_fast_marginal(n in 1usize..=12, seed in any::<u64>()) {
        let g = random_graph(n, seed);
        let mut r = rng(seed ^ 1);
        for _ in 0..4 {
            let mut ev = Evidence::marginalized(n);
            for v in 0..n {
                match r.gen_range(0..3) {
                    0 => ev.set(v, VarState::Zero),
                    1 => ev.set(v, VarState::One),
                    _ => {}
                }
            }
            let fast = g.log_marginal(&ev).unwrap().exp();
            prop_assert!((fast - brute_force_marginal(&g, &ev).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_mi_is_permutation_equivariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let data = TreeBayesNet::random(6, &mut r).sample(200, &mut r);
        let mut perm: Vec<usize> = (0..6).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let rows: Vec<Vec<u8>> = data.rows().map(|row| perm.iter().map(|&p| row[p]).collect()).collect();
        let permuted = BinaryDataset::from_rows(&rows).unwrap();
        let (a, b) = (empirical_pairwise_mi(&data, 0.5), empirical_pairwise_mi(&permuted, 0.5));
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((b.get(i, j) - a.get(perm[i], perm[j])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn oracle_boundaries() {
    let g = random_graph(8, 5);
    assert!((brute_force_marginal(&g, &Evidence::marginalized(8)).unwrap() - 1.0).abs() < 1e-6);
    let row = [1u8, 0, 1, 1, 0, 0, 1, 0];
    let full = brute_force_marginal(&g, &Evidence::from_row(&row)).unwrap();
    assert_eq!(full, g.log_likelihood(&row).unwrap().exp());
}

#[test]
fn gap_of_factorized_model_is_norm_of_empirical() {
    let mut r = rng(2);
    let data = TreeBayesNet::random(5, &mut r).sample(300, &mut r);
    let e = empirical_pairwise_mi(&data, 0.5);
    let zero = MiMatrix::zeros(5);
    let norm: f64 = (0..5).flat_map(|i| (0..5).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| e.get(i, j).powi(2)).sum::<f64>().sqrt();
    assert!((mi_gap(&zero, &e).unwrap() - norm).abs() < 1e-14);
}
