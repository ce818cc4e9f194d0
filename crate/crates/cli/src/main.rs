use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use spnforest::data::{load_binary_csv, load_model, save_model_with_slices};
use spnforest::diagnostics::{combined_triangular_csv, empirical_pairwise_mi, mi_gap, model_pairwise_mi, EMPIRICAL_MI_ALPHA};
use spnforest::em::EmConfig;
use spnforest::learn::{ClusterMode, SplitMode};
use spnforest::stats::{comparison_line, structure_stats};
use spnforest::validate::validate;
use spnforest_cli::pipeline::{self, fit_components_individually, fit_kind, learn_components, load_data, mean_ll};
use spnforest_cli::report::{bench_csv, BenchRow, ComponentsReport, ModelReport, RunReport};
use spnforest_cli::synth::{tree_bundle, write_bundle, NLTCS_SHAPE};
use spnforest_cli::{EnsembleKind, RunConfig};

#[derive(Parser)]
#[command(name = "spnforest", version, about = "Randomized sum-product network ensembles for binary density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn independent ExtraSPNs and score each after its own EM run.
    LearnExtra(RunArgs),
    /// Build, train and score one ensemble.
    Ensemble {
        #[arg(long, value_enum)]
        kind: EnsembleKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Mean log-likelihood of a model on a CSV-of-bits file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Empirical and model pairwise mutual information, plus their gap.
    Mi {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Structure statistics of a model.
    Stats {
        #[arg(long)]
        model: PathBuf,
        /// Dataset name for the reference comparison line.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Best ExtraSPN, RSPF, ResSPN and optionally InfoResSPN over several datasets.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "nltcs")]
        datasets: Vec<String>,
        #[arg(long)]
        with_informed: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a synthetic train/valid/test bundle sampled from a random tree network.
    Synth {
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long, env = "SPN_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = NLTCS_SHAPE.0)]
        vars: usize,
        #[arg(long, default_value_t = NLTCS_SHAPE.1)]
        train: usize,
        #[arg(long, default_value_t = NLTCS_SHAPE.2)]
        valid: usize,
        #[arg(long, default_value_t = NLTCS_SHAPE.3)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_cluster_mode(s: &str) -> Result<ClusterMode, String> {
    match s {
        "random" => Ok(ClusterMode::Random),
        "kmeans" => Ok(ClusterMode::KMeans),
        _ => Err(format!("unknown cluster mode {s:?}; expected random or kmeans")),
    }
}

fn parse_split_mode(s: &str) -> Result<SplitMode, String> {
    match s {
        "random" => Ok(SplitMode::Random),
        "gtest" => Ok(SplitMode::GTest),
        _ => Err(format!("unknown split mode {s:?}; expected random or gtest")),
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "nltcs")]
    dataset: String,
    #[arg(long, env = "SPN_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_components: usize,
    #[arg(long, default_value_t = 0.6)]
    beta: f64,
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
    /// Laplace smoothing of leaves at learning time.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value = "random", value_parser = parse_cluster_mode)]
    cluster_mode: ClusterMode,
    #[arg(long, default_value = "random", value_parser = parse_split_mode)]
    split_mode: SplitMode,
    #[arg(long, default_value_t = 10.83)]
    rho: f64,
    /// Residual-link ratios; the best on validation data is kept.
    #[arg(long = "k", value_delimiter = ',', default_value = "0.1,0.2")]
    ks: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    per_s1_cap: usize,
    /// Let one source sum take links until the budget is spent.
    #[arg(long)]
    no_link_cap: bool,
    /// Defaults to 1000, or 10 for InfoResSPN.
    #[arg(long)]
    em_max_iters: Option<usize>,
    #[arg(long, default_value_t = 5)]
    em_window: usize,
    #[arg(long, default_value_t = 1e-7)]
    em_var_tol: f64,
    #[arg(long, default_value_t = 0.1)]
    leaf_alpha: f64,
    /// Keep leaf parameters fixed during EM.
    #[arg(long)]
    no_leaf_update: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Keep this fraction of training rows.
    #[arg(long)]
    subsample_rows: Option<f64>,
}

impl RunArgs {
    fn config(&self, kind: Option<EnsembleKind>) -> Result<RunConfig> {
        let default_iters = match kind {
            Some(EnsembleKind::Inforesspn) => 10,
            _ => EmConfig::default().max_iters,
        };
        let config = RunConfig {
            dataset: self.dataset.clone(),
            data_dir: self.data_dir.clone(),
            n_components: self.n_components,
            beta: self.beta,
            gamma: self.gamma,
            alpha: self.alpha,
            cluster_mode: self.cluster_mode,
            split_mode: self.split_mode,
            rho: self.rho,
            ks: self.ks.clone(),
            per_s1_cap: (!self.no_link_cap).then_some(self.per_s1_cap),
            em: EmConfig {
                max_iters: self.em_max_iters.unwrap_or(default_iters),
                window: self.em_window,
                var_tol: self.em_var_tol,
                leaf_alpha: self.leaf_alpha,
                update_leaves: !self.no_leaf_update,
            },
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            subsample_rows: self.subsample_rows,
        };
        config.check()?;
        Ok(config)
    }
}

fn prepare_out_dir(dir: &Option<PathBuf>) -> Result<Option<&Path>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

fn base_report(command: &str, config: &RunConfig, bundle: &spnforest::DatasetBundle) -> RunReport {
    RunReport {
        command: command.to_string(),
        dataset: config.dataset.clone(),
        n_vars: bundle.n_vars(),
        n_train: bundle.train.n_rows(),
        n_valid: bundle.valid.n_rows(),
        n_test: bundle.test.n_rows(),
        subsampled: config.subsample_rows.is_some(),
        config: config.clone(),
        components: None,
        models: Vec::new(),
        reference: RunReport::reference_for(&config.dataset),
        total_secs: 0.0,
    }
}

fn emit(report: &mut RunReport, start: Instant, out: Option<&Path>) -> Result<()> {
    report.total_secs = start.elapsed().as_secs_f64();
    if let Some(dir) = out {
        report.write(&dir.join("report.json"))?;
    }
    println!("{}", report.to_json()?);
    Ok(())
}

fn learn_extra(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let config = args.config(None)?;
    let out = prepare_out_dir(&config.out_dir)?;
    let bundle = load_data(&config)?;
    let components = learn_components(&bundle.train, &config)?;
    let scores = fit_components_individually(&components.graphs, &bundle, &config)?;
    let mut paths = Vec::new();
    if let Some(dir) = out {
        for (i, g) in components.graphs.iter().enumerate() {
            let path = dir.join(format!("component_{i}.spn"));
            save_model_with_slices(g, &path, dir.join(format!("component_{i}.slices.json")))?;
            paths.push(path);
        }
    }
    let mut report = base_report("learn-extra", &config, &bundle);
    report.components = Some(ComponentsReport {
        components: components.info,
        best_extra_spn_test_ll: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        individual_test_ll: scores,
        model_paths: paths,
        learn_secs: components.learn_secs,
    });
    emit(&mut report, start, out)
}

fn ensemble(kind: EnsembleKind, args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let config = args.config(Some(kind))?;
    let out = prepare_out_dir(&config.out_dir)?;
    let bundle = load_data(&config)?;
    let components = learn_components(&bundle.train, &config)?;
    let (model, k_scores) = fit_kind(kind, &components.graphs, &bundle, &config)?;
    let mut m = ModelReport::new(&model, config.n_components, &k_scores);
    if let Some(dir) = out {
        let stem = kind.name().to_ascii_lowercase();
        m.write_artifacts(&model, dir, &stem)?;
        if let Some(snapshot) = &model.first_link_snapshot {
            spnforest::data::save_model(snapshot, dir.join(format!("{stem}.first_link.spn")))?;
        }
    }
    let mut report = base_report("ensemble", &config, &bundle);
    report.components = Some(ComponentsReport {
        components: components.info,
        individual_test_ll: Vec::new(),
        best_extra_spn_test_ll: f64::NAN,
        model_paths: Vec::new(),
        learn_secs: components.learn_secs,
    });
    report.models.push(m);
    emit(&mut report, start, out)
}

fn load_valid_model(path: &Path) -> Result<spnforest::SpnGraph> {
    let graph = load_model(path)?;
    let report = validate(&graph);
    anyhow::ensure!(report.is_valid(), "model {} is invalid: {report}", path.display());
    Ok(graph)
}

fn eval(model: &Path, data: &Path) -> Result<()> {
    let graph = load_valid_model(model)?;
    let data_set = load_binary_csv(data)?;
    anyhow::ensure!(
        data_set.n_cols() == graph.n_vars(),
        "universe mismatch: model has {} variables, data has {}",
        graph.n_vars(),
        data_set.n_cols()
    );
    let ll = mean_ll(&graph, &data_set)?;
    let record = json!({ "model": model, "data": data, "n_rows": data_set.n_rows(), "mean_ll": ll });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn mi(model: &Path, data: &Path, out_dir: &Path) -> Result<()> {
    let graph = load_valid_model(model)?;
    let data_set = load_binary_csv(data)?;
    anyhow::ensure!(
        data_set.n_cols() == graph.n_vars(),
        "universe mismatch: model has {} variables, data has {}",
        graph.n_vars(),
        data_set.n_cols()
    );
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let empirical = empirical_pairwise_mi(&data_set, EMPIRICAL_MI_ALPHA);
    let model_mi = model_pairwise_mi(&graph)?;
    let gap = mi_gap(&model_mi, &empirical)?;
    let paths = [
        out_dir.join("empirical_mi.csv"),
        out_dir.join("model_mi.csv"),
        out_dir.join("mi_triangular.csv"),
    ];
    empirical.write_csv(&paths[0])?;
    model_mi.write_csv(&paths[1])?;
    std::fs::write(&paths[2], combined_triangular_csv(&model_mi, &empirical)?)?;
    let record = json!({
        "model": model,
        "data": data,
        "mi_gap": gap,
        "units": "nats",
        "empirical_mi": paths[0],
        "model_mi": paths[1],
        "triangular": paths[2],
        "triangular_layout": "upper triangle model, lower triangle empirical",
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn stats(model: &Path, dataset: Option<&str>) -> Result<()> {
    let graph = load_valid_model(model)?;
    let stats = structure_stats(&graph)?;
    let line = comparison_line(dataset.unwrap_or("model"), &stats);
    let record = json!({
        "model": model,
        "stats": stats,
        "layers_definition": "nodes on the longest root-to-leaf path",
        "comparison": line,
    });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn bench(datasets: &[String], with_informed: bool, args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let out = prepare_out_dir(&args.out_dir)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for name in datasets {
        let config = RunConfig {
            dataset: name.clone(),
            ..args.config(None)?
        };
        let bundle = load_data(&config)?;
        let components = learn_components(&bundle.train, &config)?;
        let individual = fit_components_individually(&components.graphs, &bundle, &config)?;
        let rspf = pipeline::fit_rspf(&components.graphs, &bundle, &config)?;
        let (resspn, res_scores) = pipeline::fit_resspn(&components.graphs, &bundle, &config, false)?;
        let mut models = vec![
            ModelReport::new(&rspf, config.n_components, &[]),
            ModelReport::new(&resspn, config.n_components, &res_scores),
        ];
        let mut info_ll = None;
        if with_informed {
            let info_config = RunConfig {
                em: EmConfig {
                    max_iters: args.em_max_iters.unwrap_or(10),
                    ..config.em.clone()
                },
                ..config.clone()
            };
            let (info, info_scores) = pipeline::fit_resspn(&components.graphs, &bundle, &info_config, true)?;
            info_ll = info.test_ll;
            models.push(ModelReport::new(&info, config.n_components, &info_scores));
        }
        rows.push(BenchRow {
            dataset: name.clone(),
            n_components: config.n_components,
            subsampled: config.subsample_rows.is_some(),
            best_extra_spn: individual.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            rspf: rspf.test_ll.unwrap(),
            resspn: resspn.test_ll.unwrap(),
            inforesspn: info_ll,
            rspf_train: rspf.train_ll,
            resspn_train: resspn.train_ll,
        });
        let mut report = base_report("bench", &config, &bundle);
        report.components = Some(ComponentsReport {
            components: components.info,
            best_extra_spn_test_ll: rows.last().unwrap().best_extra_spn,
            individual_test_ll: individual,
            model_paths: Vec::new(),
            learn_secs: components.learn_secs,
        });
        report.models = models;
        report.total_secs = start.elapsed().as_secs_f64();
        reports.push(report);
    }
    let table = bench_csv(&rows);
    if let Some(dir) = out {
        std::fs::write(dir.join("bench.csv"), &table)?;
        std::fs::write(dir.join("bench.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    print!("{table}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(name: &str, dir: &Path, vars: usize, train: usize, valid: usize, test: usize, seed: u64) -> Result<()> {
    anyhow::ensure!(vars >= 1 && train >= 1 && valid >= 1 && test >= 1, "sizes must be positive");
    let (bundle, _) = tree_bundle(name, vars, (train, valid, test), seed);
    write_bundle(&bundle, dir)?;
    let record = json!({ "name": name, "data_dir": dir, "n_vars": vars, "rows": [train, valid, test], "seed": seed });
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::LearnExtra(args) => learn_extra(args),
        Command::Ensemble { kind, run } => ensemble(*kind, run),
        Command::Eval { model, data } => eval(model, data),
        Command::Mi { model, data, out_dir } => mi(model, data, out_dir),
        Command::Stats { model, dataset } => stats(model, dataset.as_deref()),
        Command::Bench {
            datasets,
            with_informed,
            run,
        } => bench(datasets, *with_informed, run),
        Command::Synth {
            name,
            data_dir,
            vars,
            train,
            valid,
            test,
            seed,
        } => synth(name, data_dir, *vars, *train, *valid, *test, *seed),
    }
}

fn error_record(kind: &str, err: &anyhow::Error) -> String {
    let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
    json!({ "status": "error", "kind": kind, "message": err.to_string(), "causes": causes }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = anyhow::anyhow!(e.to_string().trim().to_string());
            eprintln!("{}", error_record("usage", &err));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record("runtime", &e));
            ExitCode::FAILURE
        }
    }
}
