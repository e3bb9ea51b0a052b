//! Command-line front end: `pfgap <subcommand> [flags]`.
//!
//! Every run writes a JSON manifest next to its main artifact holding the
//! command line, the resolved configuration, and SHA-256 hashes of inputs
//! and outputs. `pfgap replay --manifest m.json --verify` runs the recorded
//! command again and checks that every artifact hash is reproduced.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analyze::{classical_mds, outlier_scores};
use crate::bench::{self, BenchOptions, VmfParams};
use crate::dataset::{
    inject_mcar, load_any, write_csv_like, write_series_jsonl, CsvOptions, DataFormat, Dataset, Target, Task,
};
use crate::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::forest::{fit, DistanceChoice, Forest, ForestConfig, Purity};
use crate::gap::{compute_oob_proximities, compute_test_proximities, symmetrize_and_dissimilarity};
use crate::impute::{gap_impute_test, gap_impute_train, ImputeConfig, InitStrategy, Metric};
use crate::meta::{attach_meta_distance, PredictionTable};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "pfgap",
    version,
    about = "Proximity forests with GAP proximities",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true, env = "PFGAP_THREADS")]
    pub threads: Option<usize>,

    /// JSON object of flag values applied before the command-line flags,
    /// e.g. {"trees": 100, "dist": ["dtw_d", "dtw_i"]}.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Fit a forest and report out-of-bag accuracy or R^2.
    Train(TrainArgs),
    /// Predict a labeled dataset with a saved forest.
    Predict(PredictArgs),
    /// Write GAP proximities as `row col value` triplets.
    Prox(ProxArgs),
    /// Within-class outlier scores from out-of-bag proximities.
    Outliers(OutliersArgs),
    /// Classical MDS embedding of the proximity dissimilarities.
    Mds(MdsArgs),
    /// Iterative GAP imputation of a training set (and optionally a test set).
    Impute(ImputeArgs),
    /// Run a named benchmark protocol.
    Bench(BenchArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Dataset file: .csv (vectors) or .jsonl (series or graphs).
    #[arg(long)]
    pub data: PathBuf,
    /// Label column of a CSV file.
    #[arg(long)]
    pub label: Option<String>,
    /// Id column of a CSV file; row numbers are used otherwise.
    #[arg(long)]
    pub id_column: Option<String>,
    /// CSV columns holding category names.
    #[arg(long = "categorical")]
    pub categorical: Vec<String>,
    /// Treat labels as real-valued regression targets.
    #[arg(long)]
    pub regression: bool,
}

impl DataArgs {
    fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label.clone().unwrap_or_default(),
            regression: self.regression,
            id_column: self.id_column.clone(),
            categorical_columns: self.categorical.clone(),
        }
    }

    fn load(&self) -> Result<(Dataset, DataFormat)> {
        load_with(&self.data, &self.csv_options())
    }
}

fn load_with(path: &Path, opts: &CsvOptions) -> Result<(Dataset, DataFormat)> {
    if DataFormat::detect(path)? == DataFormat::Csv && opts.label_column.is_empty() {
        return Err(Error::Config(format!("{} is a CSV file; pass --label <column>", path.display())));
    }
    load_any(path, opts)
}

#[derive(Debug, Args, Serialize)]
pub struct ForestArgs {
    /// Number of trees (default 11).
    #[arg(long)]
    pub trees: Option<usize>,
    /// Candidate splits per node (default 5).
    #[arg(long)]
    pub r: Option<usize>,
    /// Distance spec `name[:k=v,...]`; repeat to give the forest a set to choose from.
    #[arg(long = "dist")]
    pub dist: Vec<String>,
    /// Draw the distance per node or once per tree.
    #[arg(long, default_value = "per-node")]
    pub dist_choice: String,
    /// gini (classification), variance or mad (regression).
    #[arg(long)]
    pub purity: Option<String>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum in-bag weight of a node that may still be split.
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ForestArgs {
    fn config(&self, task: Task) -> Result<ForestConfig> {
        let specs = if self.dist.is_empty() {
            vec![DistanceSpec::euclidean()]
        } else {
            self.dist.iter().map(|s| s.parse()).collect::<Result<Vec<DistanceSpec>>>()?
        };
        let mut cfg = match task {
            Task::Classification => ForestConfig::classification(specs),
            Task::Regression => ForestConfig::regression(specs),
        }
        .with_seed(self.seed);
        if let Some(t) = self.trees {
            cfg.n_trees = t;
        }
        if let Some(r) = self.r {
            cfg.r = r;
        }
        cfg.distance_choice = self.dist_choice.parse::<DistanceChoice>()?;
        if let Some(p) = &self.purity {
            cfg.purity = p.parse::<Purity>()?;
        }
        cfg.max_depth = self.max_depth;
        if let Some(m) = self.min_leaf {
            cfg.min_leaf = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MetaArgs {
    /// Predictions CSV (`id,label` or `id,p0,..`) enabling the meta distance.
    #[arg(long)]
    pub meta_predictions: Option<PathBuf>,
    /// Use only the meta distance instead of adding it to the --dist set.
    #[arg(long)]
    pub meta_only: bool,
}

impl MetaArgs {
    fn attach(&self, mut cfg: ForestConfig, train: &Dataset, inputs: &mut Vec<PathBuf>) -> Result<ForestConfig> {
        let Some(path) = &self.meta_predictions else {
            return Ok(cfg);
        };
        let table = Arc::new(PredictionTable::load_csv(path)?);
        inputs.push(path.clone());
        if self.meta_only {
            cfg.distances.clear();
        }
        let form = table.form();
        attach_meta_distance(&cfg, table, form, train.instances.iter().map(|x| x.id.as_str()))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub meta: MetaArgs,
    /// Model file to write.
    #[arg(long, default_value = "model.pf")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write class probabilities instead of labels.
    #[arg(long)]
    pub probabilities: bool,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProxArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test dataset; without it the out-of-bag matrix of the training set is written.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub id_column: Option<String>,
    /// Write a dense CSV instead of triplets.
    #[arg(long)]
    pub dense: bool,
    #[arg(long, default_value = "proximities.txt")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OutliersArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of flagged instances per class.
    #[arg(long, default_value_t = 3)]
    pub top_q: usize,
    #[arg(long, default_value = "outliers.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MdsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value = "embedding.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub meta: MetaArgs,
    /// mean, median, knn or linear.
    #[arg(long, default_value = "mean")]
    pub init: String,
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
    /// Iteration selection metric: r2, rmse, mae, f1 or accuracy.
    #[arg(long, default_value = "r2")]
    pub metric: String,
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
    #[arg(long)]
    pub condition_on_label: bool,
    /// Mask this fraction of entries completely at random before imputing.
    #[arg(long)]
    pub mcar: Option<f64>,
    /// Test dataset to impute with the forest fitted on the imputed training set.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    /// Skip the training-set iterations: initialize the training data and fit once
    /// (the meta-imputation flow for complete training data).
    #[arg(long)]
    pub test_only: bool,
    /// Imputed training set, written in the input format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// One of: penguin, sphere, proteins, vowels, flood, arrowhead_meta, scaling, blobs.
    pub name: String,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    pub seeds: Vec<u64>,
    /// Single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    #[arg(long, default_value_t = 150)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 10.0)]
    pub kappa: f64,
    /// Fixed angle in radians between the sphere class means (default: independent random rotations).
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub wl_depth: usize,
    /// Output directory for `<name>.json`, `<name>.csv` and the manifest.
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fail unless every recorded artifact hash is reproduced.
    #[arg(long)]
    pub verify: bool,
}

/// Hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run {
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    metrics: BTreeMap<String, Value>,
    seed: Option<u64>,
    manifest: PathBuf,
}

impl Run {
    fn new(manifest: PathBuf) -> Self {
        Run {
            inputs: Vec::new(),
            artifacts: Vec::new(),
            metrics: BTreeMap::new(),
            seed: None,
            manifest,
        }
    }

    fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_owned(), value.into());
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn hashes(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses `argv` (without the program name), expanding `--config`.
fn parse(argv: &[OsString]) -> std::result::Result<Cli, clap::Error> {
    let first = Cli::try_parse_from(std::iter::once(OsString::from("pfgap")).chain(argv.iter().cloned()))?;
    let Some(config) = &first.config else {
        return Ok(first);
    };
    let extra = config_flags(config).map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{e}\n")))?;
    let sub = argv
        .iter()
        .position(|a| !a.to_string_lossy().starts_with('-') && is_subcommand(a))
        .unwrap_or(0);
    let mut full: Vec<OsString> = vec!["pfgap".into()];
    full.extend(argv[..=sub].iter().cloned());
    full.extend(extra);
    full.extend(argv[sub + 1..].iter().cloned());
    Cli::try_parse_from(full)
}

fn is_subcommand(a: &OsString) -> bool {
    matches!(
        a.to_str(),
        Some("train" | "predict" | "prox" | "outliers" | "mds" | "impute" | "bench" | "replay")
    )
}

fn config_flags(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Config(format!("{}: expected a JSON object", path.display())))?;
    let mut out = Vec::new();
    for (k, v) in obj {
        let flag = format!("--{}", k.replace('_', "-"));
        let values: Vec<&Value> = match v {
            Value::Array(a) => a.iter().collect(),
            other => vec![other],
        };
        for v in values {
            match v {
                Value::Bool(true) => out.push(flag.clone().into()),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => {
                    out.push(flag.clone().into());
                    out.push(s.into());
                }
                other => {
                    out.push(flag.clone().into());
                    out.push(other.to_string().into());
                }
            }
        }
    }
    Ok(out)
}

/// Runs the command line `argv` (without the program name) and returns the
/// process exit code.
pub fn main_with_args(argv: Vec<OsString>) -> i32 {
    let cli = match parse(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return 2;
        }
        // a pool built by an earlier call in this process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, argv: &[OsString]) -> Result<()> {
    let mut run = match &cli.command {
        Command::Train(a) => train(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Prox(a) => prox(a)?,
        Command::Outliers(a) => outliers(a)?,
        Command::Mds(a) => mds(a)?,
        Command::Impute(a) => impute(a)?,
        Command::Bench(a) => bench_cmd(a)?,
        Command::Replay(a) => return replay(a),
    };
    if let Some(c) = &cli.config {
        run.inputs.push(c.clone());
    }
    let manifest = json!({
        "tool": "pfgap",
        "version": env!("CARGO_PKG_VERSION"),
        "command": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "config": &cli.command,
        "seed": run.seed,
        "threads": rayon::current_num_threads(),
        "inputs": hashes(&run.inputs)?,
        "artifacts": hashes(&run.artifacts)?,
        "metrics": run.metrics,
    });
    write_json(&run.manifest, &manifest)?;
    println!("manifest {}", run.manifest.display());
    Ok(())
}

fn summary_line(forest: &Forest, pred: &[Option<Target>]) -> (String, f64, usize) {
    let covered: Vec<(usize, Target)> = pred
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|p| (i, p)))
        .collect();
    let truth: Vec<Target> = covered.iter().map(|&(i, _)| forest.train.targets[i]).collect();
    let guess: Vec<Target> = covered.iter().map(|&(_, p)| p).collect();
    let s = bench::score(&guess, &truth);
    let name = match forest.task() {
        Task::Classification => "oob_accuracy",
        Task::Regression => "oob_r2",
    };
    (name.to_owned(), s, covered.len())
}

fn train(a: &TrainArgs) -> Result<Run> {
    let (d, _) = a.data.load()?;
    let mut run = Run::new(manifest_path(&a.out));
    run.inputs.push(a.data.data.clone());
    let cfg = a.meta.attach(a.forest.config(d.task)?, &d, &mut run.inputs)?;
    run.seed = Some(cfg.seed);
    let forest = fit(&d, &cfg)?;
    forest.save(&a.out)?;
    let oob = forest.predict_oob();
    let (name, score, covered) = summary_line(&forest, &oob.predictions);
    println!("{name}={score:.4} covered={covered}/{}", d.len());
    run.metric(&name, score);
    run.metric("oob_covered", covered);
    run.artifacts.push(a.out.clone());
    Ok(run)
}

fn load_model_for(model: &Path, run: &mut Run) -> Result<Forest> {
    let forest = Forest::load(model)?;
    run.inputs.push(model.to_path_buf());
    run.seed = Some(forest.config.seed);
    Ok(forest)
}

fn check_kind(forest: &Forest, d: &Dataset) -> Result<()> {
    if forest.train.kind() != d.kind() {
        return Err(Error::PayloadKind(format!(
            "the model was trained on {:?} data but the input holds {:?}",
            forest.train.kind(),
            d.kind()
        )));
    }
    Ok(())
}

fn align_classes(forest: &Forest, d: &mut Dataset) -> Result<()> {
    if forest.task() == Task::Classification {
        d.reindex_classes(&forest.train.classes)?;
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<Run> {
    let mut run = Run::new(manifest_path(&a.out));
    let forest = load_model_for(&a.model, &mut run)?;
    let mut opts = a.data.csv_options();
    opts.regression = forest.task() == Task::Regression;
    let (mut d, _) = load_with(&a.data.data, &opts)?;
    run.inputs.push(a.data.data.clone());
    check_kind(&forest, &d)?;
    align_classes(&forest, &mut d)?;
    let pred = forest.predict_many(&d.instances)?;
    let table = if a.probabilities {
        if forest.task() != Task::Classification {
            return Err(Error::Config("--probabilities needs a classification model".into()));
        }
        let rows = d
            .instances
            .iter()
            .map(|x| Ok((x.id.clone(), forest.predict_scores(x)?)))
            .collect::<Result<Vec<_>>>()?;
        PredictionTable::from_probabilities(rows)?
    } else {
        let rows = d.instances.iter().zip(&pred).map(|(x, p)| {
            let label = match *p {
                Target::Class(c) => forest.train.classes[c].clone(),
                Target::Real(v) => v.to_string(),
            };
            (x.id.clone(), label)
        });
        PredictionTable::from_labels(rows)?
    };
    table.write_csv(&a.out)?;
    let s = bench::score(&pred, &d.targets);
    let name = match forest.task() {
        Task::Classification => "accuracy",
        Task::Regression => "r2",
    };
    println!("{name}={s:.4} n={}", d.len());
    run.metric(name, s);
    run.artifacts.push(a.out.clone());
    Ok(run)
}

fn prox(a: &ProxArgs) -> Result<Run> {
    let mut run = Run::new(manifest_path(&a.out));
    let forest = load_model_for(&a.model, &mut run)?;
    let col_ids: Vec<String> = forest.train.instances.iter().map(|x| x.id.clone()).collect();
    let (gap, row_ids) = match &a.data {
        None => (compute_oob_proximities(&forest), col_ids.clone()),
        Some(path) => {
            let opts = CsvOptions {
                label_column: a.label.clone().unwrap_or_default(),
                regression: forest.task() == Task::Regression,
                id_column: a.id_column.clone(),
                categorical_columns: Vec::new(),
            };
            let (mut d, _) = load_with(path, &opts)?;
            run.inputs.push(path.clone());
            check_kind(&forest, &d)?;
            align_classes(&forest, &mut d)?;
            let ids = d.instances.iter().map(|x| x.id.clone()).collect();
            (compute_test_proximities(&forest, &d)?, ids)
        }
    };
    if a.dense {
        gap.write_dense_csv(&a.out, &row_ids, &col_ids)?;
    } else {
        gap.write_triplets(&a.out, &row_ids, &col_ids)?;
    }
    println!(
        "rows={} nnz={} uncovered={} max_row_error={:.2e}",
        gap.n_rows(),
        gap.nnz(),
        gap.uncovered.len(),
        gap.max_row_error()
    );
    run.metric("rows", gap.n_rows());
    run.metric("nnz", gap.nnz());
    run.metric("max_row_error", gap.max_row_error());
    run.artifacts.push(a.out.clone());
    Ok(run)
}

fn outliers(a: &OutliersArgs) -> Result<Run> {
    let mut run = Run::new(manifest_path(&a.out));
    let forest = load_model_for(&a.model, &mut run)?;
    if forest.task() != Task::Classification {
        return Err(Error::Config("outlier scores need a classification model".into()));
    }
    let report = outlier_scores(&compute_oob_proximities(&forest), &forest.train, a.top_q)?;
    report.write_csv(&a.out, &forest.train)?;
    for c in 0..forest.train.n_classes() {
        let ids: Vec<&str> = report
            .flagged(c)
            .iter()
            .map(|&i| forest.train.instances[i].id.as_str())
            .collect();
        println!("{}: {}", forest.train.classes[c], ids.join(" "));
    }
    run.metric("scored", report.rows.len());
    run.artifacts.push(a.out.clone());
    Ok(run)
}

fn mds(a: &MdsArgs) -> Result<Run> {
    let mut run = Run::new(manifest_path(&a.out));
    let forest = load_model_for(&a.model, &mut run)?;
    let dissim = symmetrize_and_dissimilarity(&compute_oob_proximities(&forest));
    let emb = classical_mds(&dissim.rows(), a.dims)?;
    let ids: Vec<String> = dissim.index.iter().map(|&i| forest.train.instances[i].id.clone()).collect();
    emb.write_csv(&a.out, &ids)?;
    println!("embedded={} eigenvalues={:?}", ids.len(), emb.eigenvalues);
    run.metric("embedded", ids.len());
    run.metric("eigenvalues", emb.eigenvalues.clone());
    run.artifacts.push(a.out.clone());
    Ok(run)
}

fn write_like(d: &Dataset, format: DataFormat, original: &Path, opts: &CsvOptions, out: &Path) -> Result<()> {
    match format {
        DataFormat::Csv => write_csv_like(d, original, opts, out),
        DataFormat::Series => write_series_jsonl(d, out),
        DataFormat::Graph => Err(Error::PayloadKind("graph datasets cannot be imputed".into())),
    }
}

fn impute(a: &ImputeArgs) -> Result<Run> {
    let opts = a.data.csv_options();
    let (mut d, format) = a.data.load()?;
    let mut run = Run::new(manifest_path(&a.out));
    run.inputs.push(a.data.data.clone());
    let icfg = ImputeConfig {
        init: a.init.parse::<InitStrategy>()?,
        iterations: a.iterations,
        metric: a.metric.parse::<Metric>()?,
        knn_k: a.knn_k,
        condition_on_label: a.condition_on_label,
    };
    icfg.validate()?;
    let base = a.forest.config(d.task)?;
    run.seed = Some(base.seed);
    if let Some(frac) = a.mcar {
        d = inject_mcar(&d, frac, base.seed)?;
    }
    let cfg = a.meta.attach(base, &d, &mut run.inputs)?;
    let (imputed, forest) = if a.test_only {
        let init = crate::impute::initialize(&d, &icfg)?;
        let forest = fit(&init, &cfg)?;
        (init, forest)
    } else {
        let report = gap_impute_train(&d, &cfg, &icfg)?;
        for r in &report.iterations {
            println!(
                "iteration {} score={:.4} fallbacks={} uncovered={}",
                r.iteration, r.score, r.fallbacks, r.uncovered
            );
        }
        println!("selected iteration {}", report.selected);
        let report_path = {
            let mut s = a.out.as_os_str().to_owned();
            s.push(".report.json");
            PathBuf::from(s)
        };
        write_json(&report_path, &report.to_json())?;
        run.artifacts.push(report_path);
        run.metric("selected", report.selected);
        run.metric("train_fallbacks", report.selected_record().fallbacks);
        let forest = fit(&report.imputed, &cfg)?;
        (report.imputed, forest)
    };
    write_like(&imputed, format, &a.data.data, &opts, &a.out)?;
    run.artifacts.push(a.out.clone());
    if let Some(test_path) = &a.test {
        let (mut test, test_format) = load_with(test_path, &opts)?;
        run.inputs.push(test_path.clone());
        if d.task == Task::Classification {
            test.reindex_classes(&d.classes)?;
        }
        let res = gap_impute_test(&imputed, &test, &forest, &icfg)?;
        let out = a.test_out.clone().unwrap_or_else(|| {
            let mut s = test_path.file_stem().unwrap_or_default().to_owned();
            s.push(".imputed.");
            s.push(test_path.extension().unwrap_or_default());
            a.out.with_file_name(s)
        });
        write_like(&res.imputed, test_format, test_path, &opts, &out)?;
        println!("test entries={} fallbacks={}", res.entries.len(), res.fallbacks);
        run.metric("test_entries", res.entries.len());
        run.metric("test_fallbacks", res.fallbacks);
        run.artifacts.push(out);
    }
    Ok(run)
}

fn bench_cmd(a: &BenchArgs) -> Result<Run> {
    let mut opts = BenchOptions {
        data_dir: a.data_dir.clone(),
        trees: a.trees,
        r: a.r,
        vmf: VmfParams {
            n_per_class: a.n_per_class,
            kappa: a.kappa,
            separation: a.separation,
        },
        wl_depth: a.wl_depth,
        ..Default::default()
    };
    if let Some(s) = a.seed {
        opts.seeds = vec![s];
    } else if !a.seeds.is_empty() {
        opts.seeds = a.seeds.clone();
    }
    if !a.sizes.is_empty() {
        opts.sizes = a.sizes.clone();
    }
    let report = bench::run_experiment(&a.name, &opts)?;
    println!("{report}");
    let artifacts = report.write(&a.out)?;
    let mut run = Run::new(a.out.join(format!("{}.manifest.json", a.name)));
    run.seed = opts.seeds.first().copied();
    run.artifacts = artifacts;
    run.metric("runtime_seconds", report.runtime_seconds);
    for (k, v) in &report.summary {
        run.metric(k, *v);
    }
    Ok(run)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    let m: Value = serde_json::from_str(&text).map_err(|e| Error::format(&a.manifest, e.line(), e.to_string()))?;
    let argv: Vec<OsString> = m["command"]
        .as_array()
        .ok_or_else(|| Error::Data("manifest has no command".into()))?
        .iter()
        .filter_map(|v| v.as_str().map(OsString::from))
        .collect();
    if argv.first().and_then(|a| a.to_str()) == Some("replay") {
        return Err(Error::Config("a replay manifest cannot be replayed".into()));
    }
    let recorded: BTreeMap<String, String> = serde_json::from_value(m["artifacts"].clone()).unwrap_or_default();
    let code = main_with_args(argv);
    if code != 0 {
        return Err(Error::Internal(format!("replayed command exited with {code}")));
    }
    if a.verify {
        for (path, hash) in &recorded {
            let now = sha256_file(Path::new(path))?;
            if &now != hash {
                return Err(Error::Internal(format!("{path}: hash {now} differs from recorded {hash}")));
            }
        }
        println!("verified {} artifacts", recorded.len());
    }
    Ok(())
}
