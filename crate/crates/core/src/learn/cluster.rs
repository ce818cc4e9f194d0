use rand::seq::SliceRandom;
use rand::Rng;

use super::ClusterMode;
use crate::data::BinaryDataset;
use crate::error::{Result, SpnError};
use crate::scope::Scope;

const KMEANS_RESTARTS: usize = 3;
const KMEANS_MAX_ITERS: usize = 50;
const KMEANS_MAX_RERUNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterOutcome {
    /// Two non-empty row groups, rows in their original order.
    Groups([Vec<u32>; 2]),
    /// The random-mode failure coin came up; the caller splits features instead.
    Failed,
}

/// Splits `rows` into two non-empty groups using the columns in `vars`.
pub fn cluster_instances<R: Rng>(
    data: &BinaryDataset,
    rows: &[u32],
    vars: &Scope,
    mode: ClusterMode,
    beta: f64,
    rng: &mut R,
) -> Result<ClusterOutcome> {
    if rows.len() < 2 {
        return Err(SpnError::InvalidArgument(format!("cannot cluster {} row(s)", rows.len())));
    }
    match mode {
        ClusterMode::Random => {
            if rng.gen_bool(beta) {
                Ok(ClusterOutcome::Failed)
            } else {
                Ok(ClusterOutcome::Groups(random_groups(rows, rng)))
            }
        }
        ClusterMode::KMeans => Ok(ClusterOutcome::Groups(two_means(data, rows, vars, rng))),
    }
}

fn random_groups<R: Rng>(rows: &[u32], rng: &mut R) -> [Vec<u32>; 2] {
    loop {
        let mut groups = [Vec::new(), Vec::new()];
        for &r in rows {
            groups[rng.gen_bool(0.5) as usize].push(r);
        }
        if !groups[0].is_empty() && !groups[1].is_empty() {
            return groups;
        }
    }
}

/// Sum over groups of squared distances from each row to its group centroid.
pub fn kmeans_objective(data: &BinaryDataset, groups: &[Vec<u32>], vars: &Scope) -> f64 {
    let cols: Vec<usize> = vars.iter().map(|v| v.index()).collect();
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let centroid = centroid(data, g, &cols);
            g.iter().map(|&r| sq_dist(data.row(r as usize), &cols, &centroid)).sum::<f64>()
        })
        .sum()
}

fn centroid(data: &BinaryDataset, rows: &[u32], cols: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; cols.len()];
    for &r in rows {
        let row = data.row(r as usize);
        for (k, &col) in cols.iter().enumerate() {
            c[k] += row[col] as f64;
        }
    }
    let n = rows.len() as f64;
    c.iter_mut().for_each(|x| *x /= n);
    c
}

fn sq_dist(row: &[u8], cols: &[usize], centroid: &[f64]) -> f64 {
    cols.iter()
        .zip(centroid)
        .map(|(&col, &c)| {
            let d = row[col] as f64 - c;
            d * d
        })
        .sum()
}

fn two_means<R: Rng>(data: &BinaryDataset, rows: &[u32], vars: &Scope, rng: &mut R) -> [Vec<u32>; 2] {
    let cols: Vec<usize> = vars.iter().map(|v| v.index()).collect();
    let differs = |a: u32, b: u32| {
        let (ra, rb) = (data.row(a as usize), data.row(b as usize));
        cols.iter().any(|&c| ra[c] != rb[c])
    };
    let mut best: Option<(f64, [Vec<u32>; 2])> = None;
    for _ in 0..KMEANS_RESTARTS {
        for _ in 0..KMEANS_MAX_RERUNS {
            let first = *rows.choose(rng).expect("at least 2 rows");
            let others: Vec<u32> = rows.iter().copied().filter(|&r| differs(r, first)).collect();
            let Some(&second) = others.choose(rng) else {
                // Every row is identical on these columns; no split is better than another.
                return random_groups(rows, rng);
            };
            let mut centroids = [
                cols.iter().map(|&c| data.get(first as usize, c) as f64).collect::<Vec<_>>(),
                cols.iter().map(|&c| data.get(second as usize, c) as f64).collect::<Vec<_>>(),
            ];
            let mut assign = vec![0u8; rows.len()];
            let mut empty = false;
            for iter in 0..KMEANS_MAX_ITERS {
                let mut changed = false;
                for (i, &r) in rows.iter().enumerate() {
                    let row = data.row(r as usize);
                    let d0 = sq_dist(row, &cols, &centroids[0]);
                    let d1 = sq_dist(row, &cols, &centroids[1]);
                    let a = (d1 < d0) as u8;
                    if a != assign[i] {
                        assign[i] = a;
                        changed = true;
                    }
                }
                let groups = split_by(rows, &assign);
                if groups[0].is_empty() || groups[1].is_empty() {
                    empty = true;
                    break;
                }
                if !changed && iter > 0 {
                    break;
                }
                centroids = [centroid(data, &groups[0], &cols), centroid(data, &groups[1], &cols)];
            }
            if empty {
                continue;
            }
            let groups = split_by(rows, &assign);
            let objective = kmeans_objective(data, &groups, vars);
            if best.as_ref().is_none_or(|(b, _)| objective < *b) {
                best = Some((objective, groups));
            }
            break;
        }
    }
    match best {
        Some((_, groups)) => groups,
        None => random_groups(rows, rng),
    }
}

fn split_by(rows: &[u32], assign: &[u8]) -> [Vec<u32>; 2] {
    let mut groups = [Vec::new(), Vec::new()];
    for (&r, &a) in rows.iter().zip(assign) {
        groups[a as usize].push(r);
    }
    groups
}
