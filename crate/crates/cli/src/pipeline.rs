//! Learning, ensembling and evaluation steps shared by the subcommands and
//! the acceptance suite.

use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use spnforest::data::load_bundle;
use spnforest::em::{em_fit_rows, EmTrace};
use spnforest::ensemble::{build_rspf, EnsembleConfig, ResSpnBuilder, ResidualLinkRecord};
use spnforest::learn::{learn_extra_spn, sample_mu};
use spnforest::stats::{structure_stats, StructureStats};
use spnforest::validate::validate;
use spnforest::{BinaryDataset, Circuit, DatasetBundle, Scope, SpnGraph, WeightedRows};

use crate::config::{EnsembleKind, RunConfig};

/// Loads the bundle named in `config`, subsampling training rows if asked.
pub fn load_data(config: &RunConfig) -> Result<DatasetBundle> {
    let mut bundle = load_bundle(&config.data_dir, &config.dataset)
        .with_context(|| format!("loading dataset {:?} from {}", config.dataset, config.data_dir.display()))?;
    if let Some(f) = config.subsample_rows {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5ab5_a3b1_e000_0000);
        bundle.train = bundle.train.subsample(f, &mut rng)?;
    }
    Ok(bundle)
}

pub fn mean_ll(graph: &SpnGraph, data: &BinaryDataset) -> Result<f64> {
    let circuit = Circuit::for_root(graph)?;
    Ok(circuit.mean_log_likelihood(&WeightedRows::from_dataset(data)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentInfo {
    pub index: usize,
    pub mu: usize,
    pub seed: u64,
    pub stats: StructureStats,
}

pub struct Components {
    pub graphs: Vec<SpnGraph>,
    pub info: Vec<ComponentInfo>,
    pub learn_secs: f64,
}

/// Learns `config.n_components` ExtraSPNs in parallel. Each draws its own
/// `mu` from `[1, |train| / gamma]` and its own seed from the run seed.
pub fn learn_components(train: &BinaryDataset, config: &RunConfig) -> Result<Components> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let plan: Vec<(usize, u64)> = (0..config.n_components)
        .map(|_| (sample_mu(train.n_rows(), config.gamma, &mut rng), rng.gen()))
        .collect();
    let base = config.learn_config();
    let vars = Scope::full(train.n_cols());
    let graphs = plan
        .par_iter()
        .map(|&(mu, seed)| learn_extra_spn(train, &vars, &spnforest::learn::LearnConfig { mu, seed, ..base.clone() }))
        .collect::<spnforest::Result<Vec<_>>>()?;
    let info = graphs
        .iter()
        .zip(&plan)
        .enumerate()
        .map(|(index, (g, &(mu, seed)))| {
            Ok(ComponentInfo {
                index,
                mu,
                seed,
                stats: structure_stats(g)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Components {
        graphs,
        info,
        learn_secs: start.elapsed().as_secs_f64(),
    })
}

/// One trained model with its scores.
pub struct FittedModel {
    pub kind: EnsembleKind,
    pub k: Option<f64>,
    pub graph: SpnGraph,
    pub trace: EmTrace,
    pub train_ll: f64,
    pub valid_ll: f64,
    /// Filled in only for the model finally selected.
    pub test_ll: Option<f64>,
    pub stats: StructureStats,
    pub records: Vec<ResidualLinkRecord>,
    /// The network right after links into the first component were drawn, before EM.
    pub first_link_snapshot: Option<SpnGraph>,
    pub build_secs: f64,
    pub em_secs: f64,
}

impl FittedModel {
    pub fn n_links(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }
}

#[allow(clippy::too_many_arguments)]
fn train_and_score(
    kind: EnsembleKind,
    k: Option<f64>,
    mut graph: SpnGraph,
    bundle: &DatasetBundle,
    config: &RunConfig,
    records: Vec<ResidualLinkRecord>,
    snapshot: Option<SpnGraph>,
    build_secs: f64,
) -> Result<FittedModel> {
    let start = Instant::now();
    let rows = WeightedRows::from_dataset(&bundle.train);
    let trace = em_fit_rows(&mut graph, &rows, &config.em)?;
    let em_secs = start.elapsed().as_secs_f64();
    let report = validate(&graph);
    anyhow::ensure!(report.is_valid(), "trained {} is invalid: {report}", kind.name());
    let circuit = Circuit::for_root(&graph)?;
    let train_ll = circuit.mean_log_likelihood(&rows);
    let valid_ll = circuit.mean_log_likelihood(&WeightedRows::from_dataset(&bundle.valid));
    Ok(FittedModel {
        kind,
        k,
        stats: structure_stats(&graph)?,
        graph,
        trace,
        train_ll,
        valid_ll,
        test_ll: None,
        records,
        first_link_snapshot: snapshot,
        build_secs,
        em_secs,
    })
}

fn finalize(mut model: FittedModel, bundle: &DatasetBundle) -> Result<FittedModel> {
    model.test_ll = Some(mean_ll(&model.graph, &bundle.test)?);
    Ok(model)
}

/// Trains every component on its own and returns their test scores; the
/// best of these is the "best component" baseline.
pub fn fit_components_individually(components: &[SpnGraph], bundle: &DatasetBundle, config: &RunConfig) -> Result<Vec<f64>> {
    let rows = WeightedRows::from_dataset(&bundle.train);
    components
        .par_iter()
        .map(|c| {
            let mut g = c.clone();
            em_fit_rows(&mut g, &rows, &config.em)?;
            mean_ll(&g, &bundle.test)
        })
        .collect()
}

pub fn fit_rspf(components: &[SpnGraph], bundle: &DatasetBundle, config: &RunConfig) -> Result<FittedModel> {
    let start = Instant::now();
    let graph = build_rspf(components)?;
    let build = start.elapsed().as_secs_f64();
    finalize(train_and_score(EnsembleKind::Rspf, None, graph, bundle, config, Vec::new(), None, build)?, bundle)
}

/// Builds one residual network for a fixed `k`, trains it and scores it on
/// train and validation data.
pub fn fit_resspn_for_k(
    components: &[SpnGraph],
    bundle: &DatasetBundle,
    config: &RunConfig,
    k: f64,
    informed: bool,
) -> Result<FittedModel> {
    let start = Instant::now();
    let ens = EnsembleConfig {
        n_components: components.len(),
        k,
        informed,
        seed: config.seed,
        per_s1_cap: config.per_s1_cap,
    };
    let mut builder = ResSpnBuilder::new(components, &bundle.train, &ens)?;
    builder.link_component()?;
    let snapshot = builder.snapshot()?;
    let (graph, records) = builder.finish()?;
    let build = start.elapsed().as_secs_f64();
    let kind = if informed { EnsembleKind::Inforesspn } else { EnsembleKind::Resspn };
    train_and_score(kind, Some(k), graph, bundle, config, records, Some(snapshot), build)
}

/// Trains one model per `k` in `config.ks` and keeps the best on validation
/// data (ties go to the smaller `k`). Returns the winner, with its test
/// score, and the validation scores of all candidates.
pub fn fit_resspn(
    components: &[SpnGraph],
    bundle: &DatasetBundle,
    config: &RunConfig,
    informed: bool,
) -> Result<(FittedModel, Vec<(f64, f64)>)> {
    let mut ks = config.ks.clone();
    ks.sort_by(|a, b| a.total_cmp(b));
    ks.dedup();
    let candidates = ks
        .par_iter()
        .map(|&k| fit_resspn_for_k(components, bundle, config, k, informed))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<(f64, f64)> = candidates.iter().map(|m| (m.k.unwrap(), m.valid_ll)).collect();
    let best = candidates
        .into_iter()
        .reduce(|best, m| if m.valid_ll > best.valid_ll { m } else { best })
        .expect("at least one k");
    Ok((finalize(best, bundle)?, scores))
}

pub fn fit_kind(
    kind: EnsembleKind,
    components: &[SpnGraph],
    bundle: &DatasetBundle,
    config: &RunConfig,
) -> Result<(FittedModel, Vec<(f64, f64)>)> {
    match kind {
        EnsembleKind::Rspf => Ok((fit_rspf(components, bundle, config)?, Vec::new())),
        EnsembleKind::Resspn => fit_resspn(components, bundle, config, false),
        EnsembleKind::Inforesspn => fit_resspn(components, bundle, config, true),
    }
}
