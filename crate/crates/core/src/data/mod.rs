//! Binary datasets and benchmark file loading.
//!
//! Benchmark bundles use the conventional layout `<name>.ts.data`,
//! `<name>.valid.data` and `<name>.test.data`: one comma-separated row of
//! `0`/`1` tokens per line.

mod model;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;

use crate::error::{Result, SpnError};

pub use model::{
    from_model_str, load_model, load_model_with_slices, load_slices, save_model, save_model_with_slices,
    to_model_string,
};

/// Row-major `n_rows × n_cols` matrix over `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    values: Vec<u8>,
    n_rows: usize,
    n_cols: usize,
}

impl BinaryDataset {
    pub fn new(n_cols: usize, values: Vec<u8>) -> Result<Self> {
        if n_cols == 0 {
            return Err(SpnError::Empty("dataset columns"));
        }
        if !values.len().is_multiple_of(n_cols) {
            return Err(SpnError::InvalidArgument(format!(
                "{} values do not fill rows of {n_cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(SpnError::InvalidArgument(format!(
                "non-binary value {} at row {}, column {}",
                values[pos],
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(BinaryDataset {
            n_rows: values.len() / n_cols,
            values,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_cols = rows.first().map(Vec::len).ok_or(SpnError::Empty("dataset rows"))?;
        if let Some(r) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(SpnError::InvalidArgument(format!("row {r} has {} columns, expected {n_cols}", rows[r].len())));
        }
        BinaryDataset::new(n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.values[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.values[r * self.n_cols + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.values.chunks_exact(self.n_cols)
    }

    /// Dataset made of the given row indices, in that order.
    pub fn select_rows(&self, rows: &[u32]) -> BinaryDataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r as usize));
        }
        BinaryDataset {
            values,
            n_rows: rows.len(),
            n_cols: self.n_cols,
        }
    }

    /// Uniform subsample without replacement of `ceil(fraction · n_rows)`
    /// rows, kept in original order.
    pub fn subsample<R: Rng>(&self, fraction: f64, rng: &mut R) -> Result<BinaryDataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(SpnError::InvalidArgument(format!("subsample fraction {fraction} not in (0, 1]")));
        }
        let keep = ((self.n_rows as f64 * fraction).ceil() as usize).clamp(1, self.n_rows.max(1));
        let mut picked: Vec<u32> = index::sample(rng, self.n_rows, keep).into_iter().map(|i| i as u32).collect();
        picked.sort_unstable();
        Ok(self.select_rows(&picked))
    }
}

/// Distinct rows with multiplicities, in order of first appearance.
#[derive(Debug, Clone)]
pub struct WeightedRows {
    values: Vec<u8>,
    weights: Vec<f64>,
    n_cols: usize,
    total: f64,
}

impl WeightedRows {
    pub fn from_dataset(data: &BinaryDataset) -> Self {
        Self::collect(data.n_cols, data.rows())
    }

    pub fn from_subset(data: &BinaryDataset, rows: &[u32]) -> Self {
        Self::collect(data.n_cols, rows.iter().map(|&r| data.row(r as usize)))
    }

    fn collect<'a>(n_cols: usize, rows: impl Iterator<Item = &'a [u8]>) -> Self {
        let mut index: HashMap<&'a [u8], usize> = HashMap::new();
        let mut values = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut total = 0.0;
        for row in rows {
            total += 1.0;
            match index.get(row) {
                Some(&i) => weights[i] += 1.0,
                None => {
                    index.insert(row, weights.len());
                    values.extend_from_slice(row);
                    weights.push(1.0);
                }
            }
        }
        WeightedRows { values, weights, n_cols, total }
    }

    /// Number of distinct rows.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.values.chunks_exact(self.n_cols.max(1)).zip(self.weights.iter().copied())
    }

    pub fn chunks(&self, rows_per_chunk: usize) -> impl Iterator<Item = WeightedChunk<'_>> {
        let n_cols = self.n_cols.max(1);
        self.values
            .chunks(rows_per_chunk * n_cols)
            .zip(self.weights.chunks(rows_per_chunk))
            .map(move |(values, weights)| WeightedChunk { values, weights, n_cols })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedChunk<'a> {
    values: &'a [u8],
    weights: &'a [f64],
    n_cols: usize,
}

impl<'a> WeightedChunk<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (&'a [u8], f64)> + 'a {
        self.values.chunks_exact(self.n_cols).zip(self.weights.iter().copied())
    }
}

/// Train/validation/test splits of one benchmark.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub train: BinaryDataset,
    pub valid: BinaryDataset,
    pub test: BinaryDataset,
}

impl DatasetBundle {
    pub fn n_vars(&self) -> usize {
        self.train.n_cols()
    }
}

/// Reads a CSV-of-bits file.
pub fn load_binary_csv(path: impl AsRef<Path>) -> Result<BinaryDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SpnError::io(path, e))?;
    parse_binary_csv(&text, path)
}

pub(crate) fn parse_binary_csv(text: &str, path: &Path) -> Result<BinaryDataset> {
    let parse_err = |line: usize, column: usize, message: String| SpnError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(parse_err(1, 1, "empty file".into()));
    }
    let mut values = Vec::new();
    let mut n_cols = None;
    for (i, line) in lines.iter().enumerate() {
        let mut count = 0;
        for (j, token) in line.split(',').enumerate() {
            match token {
                "0" => values.push(0),
                "1" => values.push(1),
                other => {
                    return Err(parse_err(i + 1, j + 1, format!("non-binary token {other:?}")));
                }
            }
            count += 1;
        }
        match n_cols {
            None => n_cols = Some(count),
            Some(n) if n != count => {
                return Err(parse_err(i + 1, count.min(n) + 1, format!("ragged row: {count} columns, expected {n}")));
            }
            _ => {}
        }
    }
    BinaryDataset::new(n_cols.unwrap(), values)
}

pub fn bundle_paths(dir: impl AsRef<Path>, name: &str) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [
        dir.join(format!("{name}.ts.data")),
        dir.join(format!("{name}.valid.data")),
        dir.join(format!("{name}.test.data")),
    ]
}

/// Loads `<dir>/<name>.{ts,valid,test}.data`.
pub fn load_bundle(dir: impl AsRef<Path>, name: &str) -> Result<DatasetBundle> {
    let [train_p, valid_p, test_p] = bundle_paths(dir, name);
    for p in [&train_p, &valid_p, &test_p] {
        if !p.is_file() {
            return Err(SpnError::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing split file"),
            ));
        }
    }
    let train = load_binary_csv(&train_p)?;
    let valid = load_binary_csv(&valid_p)?;
    let test = load_binary_csv(&test_p)?;
    for (p, d) in [(&valid_p, &valid), (&test_p, &test)] {
        if d.n_cols() != train.n_cols() {
            return Err(SpnError::Parse {
                path: p.clone(),
                line: 1,
                column: 1,
                message: format!("{} columns, but the training split has {}", d.n_cols(), train.n_cols()),
            });
        }
    }
    Ok(DatasetBundle {
        name: name.to_string(),
        train,
        valid,
        test,
    })
}
