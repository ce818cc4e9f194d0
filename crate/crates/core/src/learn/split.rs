use rand::Rng;

use crate::data::BinaryDataset;
use crate::error::{Result, SpnError};
use crate::scope::Scope;

/// With probability `beta` returns `(vars, ∅)`; otherwise a uniformly random
/// bipartition with both parts non-empty.
pub fn random_split_features<R: Rng>(vars: &Scope, beta: f64, rng: &mut R) -> Result<(Scope, Scope)> {
    if vars.len() < 2 {
        return Err(SpnError::InvalidArgument(format!(
            "cannot split {} variable(s)",
            vars.len()
        )));
    }
    if rng.gen_bool(beta) {
        return Ok((vars.clone(), Scope::empty(vars.universe())));
    }
    let members = vars.to_vec();
    loop {
        let mut left = Scope::empty(vars.universe());
        let mut right = Scope::empty(vars.universe());
        for &v in &members {
            if rng.gen_bool(0.5) {
                left.insert(v);
            } else {
                right.insert(v);
            }
        }
        if !left.is_empty() && !right.is_empty() {
            return Ok((left, right));
        }
    }
}

/// `G = 2 Σ O ln(O / E)` for a 2×2 table indexed `[a][b]`, with `0 ln 0 = 0`.
pub fn g_statistic(table: [[f64; 2]; 2]) -> f64 {
    let n: f64 = table.iter().flatten().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut g = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let o = table[a][b];
            if o > 0.0 {
                g += o * (o * n / (rows[a] * cols[b])).ln();
            }
        }
    }
    (2.0 * g).max(0.0)
}

/// Connected components of the graph linking variable pairs whose G statistic
/// exceeds `rho`. Constant columns are independent of everything. Components
/// are ordered by their smallest variable.
pub fn g_test_split_features(data: &BinaryDataset, rows: &[u32], vars: &Scope, rho: f64) -> Result<Vec<Scope>> {
    if vars.len() < 2 {
        return Err(SpnError::InvalidArgument(format!(
            "cannot split {} variable(s)",
            vars.len()
        )));
    }
    if rows.len() < 2 {
        return Err(SpnError::InvalidArgument(format!("G-test needs at least 2 rows, got {}", rows.len())));
    }
    let members: Vec<usize> = vars.iter().map(|v| v.index()).collect();
    let m = members.len();
    let mut ones = vec![0usize; m];
    let mut both = vec![0usize; m * m];
    let mut set = Vec::with_capacity(m);
    for &r in rows {
        let row = data.row(r as usize);
        set.clear();
        set.extend((0..m).filter(|&i| row[members[i]] == 1));
        for (a, &i) in set.iter().enumerate() {
            ones[i] += 1;
            for &j in &set[a + 1..] {
                both[i * m + j] += 1;
            }
        }
    }
    let n = rows.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..m {
        if ones[i] == 0 || ones[i] == n {
            continue;
        }
        for j in i + 1..m {
            if ones[j] == 0 || ones[j] == n {
                continue;
            }
            let n11 = both[i * m + j];
            let n10 = ones[i] - n11;
            let n01 = ones[j] - n11;
            let n00 = n - n11 - n10 - n01;
            let g = g_statistic([[n00 as f64, n01 as f64], [n10 as f64, n11 as f64]]);
            if g > rho {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Scope)> = Vec::new();
    for (i, &var) in members.iter().enumerate() {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, s)) => s.insert(crate::scope::VarId(var as u32)),
            None => groups.push((r, Scope::from_indices(vars.universe(), [var]))),
        }
    }
    Ok(groups.into_iter().map(|(_, s)| s).collect())
}
