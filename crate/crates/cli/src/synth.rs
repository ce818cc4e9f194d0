//! Synthetic benchmark bundles sampled from a random tree Bayesian network.

use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spnforest::data::bundle_paths;
use spnforest::synthetic::TreeBayesNet;
use spnforest::{BinaryDataset, DatasetBundle};

/// Split sizes of the 16-variable NLTCS benchmark.
pub const NLTCS_SHAPE: (usize, usize, usize, usize) = (16, 16181, 2157, 3236);

pub fn tree_bundle(name: &str, n_vars: usize, sizes: (usize, usize, usize), seed: u64) -> (DatasetBundle, TreeBayesNet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = TreeBayesNet::random(n_vars, &mut rng);
    let bundle = DatasetBundle {
        name: name.to_string(),
        train: net.sample(sizes.0, &mut rng),
        valid: net.sample(sizes.1, &mut rng),
        test: net.sample(sizes.2, &mut rng),
    };
    (bundle, net)
}

pub fn to_csv(data: &BinaryDataset) -> String {
    let mut out = String::with_capacity(data.n_rows() * (2 * data.n_cols()));
    for row in data.rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push(if *v == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

/// Writes `<dir>/<name>.{ts,valid,test}.data`.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = bundle_paths(dir, &bundle.name);
    for (path, data) in paths.iter().zip([&bundle.train, &bundle.valid, &bundle.test]) {
        std::fs::write(path, to_csv(data)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
