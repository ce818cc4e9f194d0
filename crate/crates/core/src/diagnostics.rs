//! Pairwise mutual information and the enumeration oracle.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::BinaryDataset;
use crate::error::{Result, SpnError};
use crate::eval::{Circuit, Evidence, VarState};
use crate::graph::SpnGraph;

/// Largest universe [`brute_force_marginal`] will enumerate.
pub const BRUTE_FORCE_MAX_VARS: usize = 20;
/// Default per-cell pseudo-count for empirical MI.
pub const EMPIRICAL_MI_ALPHA: f64 = 0.5;
const JOINT_TOLERANCE: f64 = 1e-4;

/// Symmetric matrix of pairwise mutual information in nats, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    n: usize,
    values: Vec<f64>,
}

impl MiMatrix {
    pub fn zeros(n: usize) -> Self {
        MiMatrix { n, values: vec![0.0; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    /// Row-major CSV with a header of variable indices.
    pub fn to_csv(&self) -> String {
        let mut out = header(self.n);
        for i in 0..self.n {
            write_row(&mut out, i, (0..self.n).map(|j| self.get(i, j)));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), &self.to_csv())
    }
}

fn header(n: usize) -> String {
    let mut out = String::from("var");
    for j in 0..n {
        write!(out, ",{j}").unwrap();
    }
    out.push('\n');
    out
}

fn write_row(out: &mut String, i: usize, cells: impl Iterator<Item = f64>) {
    write!(out, "{i}").unwrap();
    for v in cells {
        write!(out, ",{v:.17e}").unwrap();
    }
    out.push('\n');
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SpnError::io(path, e))
}

/// One matrix with `upper` above the diagonal and `lower` below it.
pub fn combined_triangular_csv(upper: &MiMatrix, lower: &MiMatrix) -> Result<String> {
    check_dims(upper, lower)?;
    let n = upper.len();
    let mut out = header(n);
    for i in 0..n {
        write_row(
            &mut out,
            i,
            (0..n).map(|j| match j.cmp(&i) {
                std::cmp::Ordering::Greater => upper.get(i, j),
                std::cmp::Ordering::Less => lower.get(i, j),
                std::cmp::Ordering::Equal => 0.0,
            }),
        );
    }
    Ok(out)
}

/// MI of a 2×2 joint `p[a][b]`, marginals taken from the joint, `0 ln 0 = 0`.
pub fn mutual_information(p: [[f64; 2]; 2]) -> f64 {
    let pa = [p[0][0] + p[0][1], p[1][0] + p[1][1]];
    let pb = [p[0][0] + p[1][0], p[0][1] + p[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            if p[a][b] > 0.0 {
                mi += p[a][b] * (p[a][b] / (pa[a] * pb[b])).ln();
            }
        }
    }
    mi
}

/// Empirical MI from 2×2 counts smoothed by `alpha` per cell.
pub fn empirical_pairwise_mi(data: &BinaryDataset, alpha: f64) -> MiMatrix {
    let n = data.n_cols();
    let mut ones = vec![0u64; n];
    let mut both = vec![0u64; n * n];
    let mut set = Vec::with_capacity(n);
    for row in data.rows() {
        set.clear();
        set.extend((0..n).filter(|&v| row[v] == 1));
        for (a, &i) in set.iter().enumerate() {
            ones[i] += 1;
            for &j in &set[a + 1..] {
                both[i * n + j] += 1;
            }
        }
    }
    let total = data.n_rows() as f64 + 4.0 * alpha;
    let mut m = MiMatrix::zeros(n);
    if total <= 0.0 {
        return m;
    }
    for i in 0..n {
        for j in i + 1..n {
            let n11 = both[i * n + j] as f64;
            let n10 = ones[i] as f64 - n11;
            let n01 = ones[j] as f64 - n11;
            let n00 = data.n_rows() as f64 - n11 - n10 - n01;
            let p = [
                [(n00 + alpha) / total, (n01 + alpha) / total],
                [(n10 + alpha) / total, (n11 + alpha) / total],
            ];
            m.set(i, j, mutual_information(p));
        }
    }
    m
}

/// MI under the model, four marginal queries per pair.
pub fn model_pairwise_mi(graph: &SpnGraph) -> Result<MiMatrix> {
    let circuit = Circuit::for_root(graph)?;
    let n = graph.n_vars();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map_init(
            || (vec![0.0; circuit.len()], Evidence::marginalized(n)),
            |(values, ev), &(i, j)| {
                let mut p = [[0.0; 2]; 2];
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        ev.set(i, if a == 1 { VarState::One } else { VarState::Zero });
                        ev.set(j, if b == 1 { VarState::One } else { VarState::Zero });
                        p[a as usize][b as usize] = circuit.forward_evidence(ev, values).exp();
                    }
                }
                ev.set(i, VarState::Marginalized);
                ev.set(j, VarState::Marginalized);
                let total: f64 = p.iter().flatten().sum();
                if (total - 1.0).abs() > JOINT_TOLERANCE {
                    return Err(SpnError::Unnormalized { i, j, total });
                }
                Ok(mutual_information(p))
            },
        )
        .collect();
    let mut m = MiMatrix::zeros(n);
    for (&(i, j), r) in pairs.iter().zip(results) {
        m.set(i, j, r?);
    }
    Ok(m)
}

fn check_dims(a: &MiMatrix, b: &MiMatrix) -> Result<()> {
    if a.len() != b.len() {
        return Err(SpnError::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Frobenius norm of the off-diagonal difference.
pub fn mi_gap(model: &MiMatrix, empirical: &MiMatrix) -> Result<f64> {
    check_dims(model, empirical)?;
    let n = model.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = model.get(i, j) - empirical.get(i, j);
                acc += d * d;
            }
        }
    }
    Ok(acc.sqrt())
}

/// Probability of `evidence` by summing full-instance likelihoods over
/// every completion of the marginalized variables.
pub fn brute_force_marginal(graph: &SpnGraph, evidence: &Evidence) -> Result<f64> {
    let n = graph.n_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(SpnError::InvalidArgument(format!(
            "enumeration is limited to {BRUTE_FORCE_MAX_VARS} variables, got {n}"
        )));
    }
    if evidence.len() != n {
        return Err(SpnError::LengthMismatch { expected: n, got: evidence.len() });
    }
    let free: Vec<usize> = (0..n).filter(|&v| evidence.states()[v] == VarState::Marginalized).collect();
    let mut row: Vec<u8> = evidence.states().iter().map(|s| (*s == VarState::One) as u8).collect();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << free.len()) {
        for (k, &v) in free.iter().enumerate() {
            row[v] = ((mask >> k) & 1) as u8;
        }
        total += graph.log_likelihood(&row)?.exp();
    }
    Ok(total)
}

/// Full joint table indexed by the assignment bits (bit `v` = value of `X_v`).
pub fn brute_force_joint(graph: &SpnGraph) -> Result<Vec<f64>> {
    let n = graph.n_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(SpnError::InvalidArgument(format!(
            "enumeration is limited to {BRUTE_FORCE_MAX_VARS} variables, got {n}"
        )));
    }
    let circuit = Circuit::for_root(graph)?;
    let mut values = vec![0.0; circuit.len()];
    let mut row = vec![0u8; n];
    Ok((0u64..(1u64 << n))
        .map(|mask| {
            for (v, x) in row.iter_mut().enumerate() {
                *x = ((mask >> v) & 1) as u8;
            }
            circuit.forward_row(&row, &mut values).exp()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scope::VarId;

    #[test]
    fn identical_fair_columns_have_ln2() {
        let rows: Vec<Vec<u8>> = (0..100).map(|i| vec![(i % 2) as u8, (i % 2) as u8]).collect();
        let d = BinaryDataset::from_rows(&rows).unwrap();
        let m = empirical_pairwise_mi(&d, 0.0);
        assert!((m.get(0, 1) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn constant_column_has_zero_mi() {
        let rows: Vec<Vec<u8>> = (0..50).map(|i| vec![1, (i % 3 == 0) as u8]).collect();
        let d = BinaryDataset::from_rows(&rows).unwrap();
        assert_eq!(empirical_pairwise_mi(&d, 0.0).get(0, 1), 0.0);
    }

    #[test]
    fn factorized_model_has_zero_mi() {
        let mut g = SpnGraph::new(3);
        let leaves: Vec<_> = [0.2, 0.5, 0.9].iter().enumerate().map(|(v, p)| g.add_leaf(VarId(v as u32), *p).unwrap()).collect();
        let p = g.add_product(leaves).unwrap();
        g.set_root(p).unwrap();
        let m = model_pairwise_mi(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(m.get(i, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn perfectly_correlated_mixture() {
        let mut g = SpnGraph::new(2);
        let a1 = g.add_leaf(VarId(0), 1.0).unwrap();
        let b1 = g.add_leaf(VarId(1), 1.0).unwrap();
        let a0 = g.add_leaf(VarId(0), 0.0).unwrap();
        let b0 = g.add_leaf(VarId(1), 0.0).unwrap();
        let p1 = g.add_product(vec![a1, b1]).unwrap();
        let p0 = g.add_product(vec![a0, b0]).unwrap();
        let s = g.add_sum(vec![p1, p0], vec![0.5, 0.5]).unwrap();
        g.set_root(s).unwrap();
        let m = model_pairwise_mi(&g).unwrap();
        assert!((m.get(0, 1) - 2f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn gap_arithmetic() {
        let mut e = MiMatrix::zeros(3);
        e.set(0, 2, 2f64.ln());
        let z = MiMatrix::zeros(3);
        assert_eq!(mi_gap(&e, &e).unwrap(), 0.0);
        assert!((mi_gap(&z, &e).unwrap() - 2f64.sqrt() * 2f64.ln()).abs() < 1e-15);
        assert!(mi_gap(&z, &MiMatrix::zeros(2)).is_err());
    }

    #[test]
    fn csv_exports() {
        let mut up = MiMatrix::zeros(2);
        up.set(0, 1, 0.5);
        let mut low = MiMatrix::zeros(2);
        low.set(0, 1, 0.25);
        assert!(up.to_csv().starts_with("var,0,1\n0,0.0"));
        let c = combined_triangular_csv(&up, &low).unwrap();
        let lines: Vec<_> = c.lines().collect();
        assert!(lines[1].ends_with(",5.00000000000000000e-1"));
        assert!(lines[2].starts_with("1,2.50000000000000000e-1"));
    }

    #[test]
    fn oracle_rejects_large_universes() {
        let mut g = SpnGraph::new(21);
        let l = g.add_leaf(VarId(0), 0.5).unwrap();
        g.set_root(l).unwrap();
        assert!(brute_force_marginal(&g, &Evidence::marginalized(21)).is_err());
    }
}
