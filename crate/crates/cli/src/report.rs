//! JSON run reports and CSV side outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use spnforest::em::StopReason;
use spnforest::StructureStats;

use crate::config::{EnsembleKind, RunConfig};
use crate::pipeline::{ComponentInfo, FittedModel};

/// Published singleton baselines: `(dataset, LearnSPN, ID-SPN)` mean test
/// log-likelihoods. Quoted for comparison only, never recomputed.
pub const REFERENCE_BASELINES: &[(&str, f64, f64)] = &[
    ("nltcs", -6.11, -6.02),
    ("msnbc", -6.11, -6.04),
    ("plants", -12.98, -12.54),
    ("audio", -40.5, -39.79),
    ("jester", -53.48, -52.86),
    ("netflix", -57.33, -56.36),
];

pub fn reference_baselines(dataset: &str) -> Option<(f64, f64)> {
    let key = dataset.to_ascii_lowercase();
    REFERENCE_BASELINES.iter().find(|r| r.0 == key).map(|r| (r.1, r.2))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub kind: EnsembleKind,
    pub name: &'static str,
    pub n_components: usize,
    pub k: Option<f64>,
    pub train_ll: f64,
    pub valid_ll: f64,
    pub test_ll: Option<f64>,
    pub stats: StructureStats,
    /// Depth is the node count on the longest root-to-leaf path.
    pub layers_definition: &'static str,
    pub em_iterations: usize,
    pub em_stop_reason: StopReason,
    pub n_links: usize,
    /// Validation score of every `k` tried, in ascending `k`.
    pub k_scores: Vec<KScore>,
    pub model_path: Option<PathBuf>,
    pub em_trace_path: Option<PathBuf>,
    pub audit_path: Option<PathBuf>,
    pub build_secs: f64,
    pub em_secs: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KScore {
    pub k: f64,
    pub valid_ll: f64,
}

impl ModelReport {
    pub fn new(model: &FittedModel, n_components: usize, k_scores: &[(f64, f64)]) -> Self {
        ModelReport {
            kind: model.kind,
            name: model.kind.name(),
            n_components,
            k: model.k,
            train_ll: model.train_ll,
            valid_ll: model.valid_ll,
            test_ll: model.test_ll,
            stats: model.stats,
            layers_definition: "nodes on the longest root-to-leaf path",
            em_iterations: model.trace.iterations(),
            em_stop_reason: model.trace.stop_reason,
            n_links: model.n_links(),
            k_scores: k_scores.iter().map(|&(k, valid_ll)| KScore { k, valid_ll }).collect(),
            model_path: None,
            em_trace_path: None,
            audit_path: None,
            build_secs: model.build_secs,
            em_secs: model.em_secs,
        }
    }

    /// Writes the model, its EM trace and (for residual networks) the link
    /// audit under `dir`, recording the paths.
    pub fn write_artifacts(&mut self, model: &FittedModel, dir: &Path, stem: &str) -> Result<()> {
        let model_path = dir.join(format!("{stem}.spn"));
        spnforest::data::save_model(&model.graph, &model_path)?;
        self.model_path = Some(model_path);
        let trace_path = dir.join(format!("{stem}.em_trace.csv"));
        model.trace.write_csv(&trace_path)?;
        self.em_trace_path = Some(trace_path);
        if model.k.is_some() {
            let audit_path = dir.join(format!("{stem}.links.csv"));
            spnforest::ensemble::write_audit_csv(&model.records, &audit_path)?;
            self.audit_path = Some(audit_path);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentsReport {
    pub components: Vec<ComponentInfo>,
    /// Test scores of each component after its own EM run.
    pub individual_test_ll: Vec<f64>,
    pub best_extra_spn_test_ll: f64,
    pub model_paths: Vec<PathBuf>,
    pub learn_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Reference {
    pub learnspn_test_ll: f64,
    pub idspn_test_ll: f64,
    pub note: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub dataset: String,
    pub n_vars: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub subsampled: bool,
    pub config: RunConfig,
    pub components: Option<ComponentsReport>,
    pub models: Vec<ModelReport>,
    pub reference: Option<Reference>,
    pub total_secs: f64,
}

impl RunReport {
    pub fn reference_for(dataset: &str) -> Option<Reference> {
        reference_baselines(dataset).map(|(l, i)| Reference {
            learnspn_test_ll: l,
            idspn_test_ll: i,
            note: "published values quoted for comparison, not reproduced",
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// One row per dataset and model kind, with the quoted baselines alongside.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub n_components: usize,
    pub subsampled: bool,
    pub best_extra_spn: f64,
    pub rspf: f64,
    pub resspn: f64,
    pub inforesspn: Option<f64>,
    pub rspf_train: f64,
    pub resspn_train: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "dataset,n_components,subsampled,best_extra_spn,learnspn_ref,idspn_ref,rspf,resspn,inforesspn,rspf_train,resspn_train\n",
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        let reference = reference_baselines(&r.dataset);
        writeln!(
            out,
            "{},{},{},{:.6},{},{},{:.6},{:.6},{},{:.6},{:.6}",
            r.dataset,
            r.n_components,
            r.subsampled,
            r.best_extra_spn,
            opt(reference.map(|x| x.0)),
            opt(reference.map(|x| x.1)),
            r.rspf,
            r.resspn,
            opt(r.inforesspn),
            r.rspf_train,
            r.resspn_train,
        )
        .unwrap();
    }
    out
}
