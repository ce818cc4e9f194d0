#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spnforest::synthetic::{random_spn, RandomSpnConfig};
use spnforest::{Evidence, SpnGraph, VarState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_graph(n_vars: usize, seed: u64) -> SpnGraph {
    random_spn(n_vars, &RandomSpnConfig::default(), &mut rng(seed))
}

/// Every assignment of `n` variables, bit `v` of the index giving `X_v`.
pub fn all_rows(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0u64..(1 << n)).map(move |m| (0..n).map(|v| ((m >> v) & 1) as u8).collect())
}

/// Sum of full-row likelihoods over rows consistent with `evidence`.
pub fn enumerate_marginal(graph: &SpnGraph, evidence: &Evidence) -> f64 {
    all_rows(graph.n_vars())
        .filter(|row| {
            evidence.states().iter().zip(row).all(|(s, x)| match s {
                VarState::Marginalized => true,
                VarState::One => *x == 1,
                VarState::Zero => *x == 0,
            })
        })
        .map(|row| graph.log_likelihood(&row).unwrap().exp())
        .sum()
}
