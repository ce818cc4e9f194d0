use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spnforest::em::EmConfig;
use spnforest::learn::{ClusterMode, LearnConfig, SplitMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Rspf,
    Resspn,
    Inforesspn,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Rspf => "RSPF",
            EnsembleKind::Resspn => "ResSPN",
            EnsembleKind::Inforesspn => "InfoResSPN",
        }
    }
}

/// Every hyperparameter of a run. Reports echo this verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub n_components: usize,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub cluster_mode: ClusterMode,
    pub split_mode: SplitMode,
    pub rho: f64,
    /// Residual-link ratios tried; the best on validation data is kept.
    pub ks: Vec<f64>,
    pub per_s1_cap: Option<usize>,
    pub em: EmConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Fraction of training rows kept, if subsampled.
    pub subsample_rows: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "nltcs".into(),
            data_dir: PathBuf::from("data"),
            n_components: 10,
            beta: 0.6,
            gamma: 5.0,
            alpha: 1.0,
            cluster_mode: ClusterMode::Random,
            split_mode: SplitMode::Random,
            rho: LearnConfig::default().rho,
            ks: vec![0.1, 0.2],
            per_s1_cap: Some(3),
            em: EmConfig::default(),
            seed: 0,
            out_dir: None,
            subsample_rows: None,
        }
    }
}

impl RunConfig {
    /// Learner settings shared by all components; `mu` and `seed` are
    /// filled in per component.
    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            mu: 1,
            beta: self.beta,
            gamma: self.gamma,
            alpha: self.alpha,
            cluster_mode: self.cluster_mode,
            split_mode: self.split_mode,
            rho: self.rho,
            seed: 0,
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.n_components >= 1, "n_components must be at least 1");
        anyhow::ensure!(!self.ks.is_empty(), "at least one k is required");
        for &k in &self.ks {
            anyhow::ensure!((0.0..=1.0).contains(&k), "k {k} not in [0, 1]");
        }
        if let Some(f) = self.subsample_rows {
            anyhow::ensure!(f > 0.0 && f <= 1.0, "subsample fraction {f} not in (0, 1]");
        }
        self.learn_config().check()?;
        self.em.check()?;
        Ok(())
    }
}
