//! Baselines, synthetic generators and experiment drivers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    harmonize_classes, inject_mcar, load_csv, load_graph_jsonl, load_series_jsonl, split_indices,
    train_test_split, Dataset, Instance, Payload, Target, Task,
};
use crate::distance::{self, DistanceMeasure, DistanceSpec};
use crate::error::{Error, Result};
use crate::forest::{fit, ForestConfig, Purity};
use crate::impute::{self, class_accuracy, gap_impute_test, gap_impute_train, ImputeConfig, InitStrategy};
use crate::meta::{attach_meta_distance, PredictionForm, PredictionTable};

/// `k` nearest training instances `(distance, index)`, nearest first; ties
/// go to the lower index.
pub fn knn_neighbors(train: &Dataset, x: &Instance, k: usize, measure: &dyn DistanceMeasure) -> Result<Vec<(f64, usize)>> {
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!("k = {k} must be in 1..={}", train.len())));
    }
    let mut all = train
        .instances
        .iter()
        .enumerate()
        .map(|(i, t)| Ok((measure.distance(x, t)?, i)))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    Ok(all)
}

/// Brute-force k-NN prediction: plurality vote (lowest label on ties) or
/// mean target.
pub fn knn_predict(train: &Dataset, test: &Dataset, k: usize, measure: &dyn DistanceMeasure) -> Result<Vec<Target>> {
    test.instances
        .par_iter()
        .map(|x| {
            let nn = knn_neighbors(train, x, k, measure)?;
            Ok(match train.task {
                Task::Classification => {
                    let mut votes = vec![0usize; train.n_classes()];
                    for &(_, i) in &nn {
                        votes[train.targets[i].class().unwrap_or(0)] += 1;
                    }
                    let best = *votes.iter().max().unwrap_or(&0);
                    Target::Class(votes.iter().position(|&v| v == best).unwrap_or(0))
                }
                Task::Regression => {
                    Target::Real(nn.iter().map(|&(_, i)| train.targets[i].real().unwrap_or(0.0)).sum::<f64>() / nn.len() as f64)
                }
            })
        })
        .collect()
}

fn masked_distance(a: &Instance, b: &Instance) -> Option<f64> {
    let mut sum = 0.0;
    let mut used = 0;
    for j in 0..a.payload.n_channels().min(b.payload.n_channels()) {
        let (x, y) = (a.payload.channel(j), b.payload.channel(j));
        for t in 0..x.len().min(y.len()) {
            if a.mask.is_missing(j, t) || b.mask.is_missing(j, t) {
                continue;
            }
            sum += (x[t] - y[t]).powi(2);
            used += 1;
        }
    }
    (used > 0).then(|| sum.sqrt())
}

/// k-NN imputation: each masked entry becomes the inverse-distance-weighted
/// mean of the `k` nearest donors observed at that position, with distances
/// over mutually observed coordinates. Donors at distance zero share the
/// whole weight. When `same` is set, `d` and `donors` are the same set and
/// an instance never donates to itself.
pub fn knn_impute(d: &Dataset, donors: &Dataset, k: usize, same: bool) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let filled: Vec<Vec<(usize, usize, f64)>> = d
        .instances
        .par_iter()
        .enumerate()
        .map(|(n, x)| {
            if x.mask.is_empty() {
                return Ok(Vec::new());
            }
            let mut near: Vec<(f64, usize)> = donors
                .instances
                .iter()
                .enumerate()
                .filter(|&(i, _)| !(same && i == n))
                .filter_map(|(i, y)| masked_distance(x, y).map(|dist| (dist, i)))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut out = Vec::new();
            for j in 0..x.payload.n_channels() {
                for &t in x.mask.missing(j) {
                    let pool: Vec<(f64, f64)> = near
                        .iter()
                        .filter(|&&(_, i)| {
                            let y = &donors.instances[i];
                            y.mask.is_observed(&y.payload, j, t)
                        })
                        .take(k)
                        .map(|&(dist, i)| (dist, donors.instances[i].payload.channel(j)[t]))
                        .collect();
                    let value = if pool.is_empty() {
                        column_mean(donors, j, t)
                            .ok_or_else(|| Error::Data(format!("no donor observed at ({j},{t})")))?
                    } else if pool.iter().any(|p| p.0 == 0.0) {
                        let zero: Vec<f64> = pool.iter().filter(|p| p.0 == 0.0).map(|p| p.1).collect();
                        zero.iter().sum::<f64>() / zero.len() as f64
                    } else {
                        let w: f64 = pool.iter().map(|p| 1.0 / p.0).sum();
                        pool.iter().map(|p| p.1 / p.0).sum::<f64>() / w
                    };
                    out.push((j, t, value));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = d.clone();
    for (n, entries) in filled.into_iter().enumerate() {
        for (j, t, v) in entries {
            out.instances[n].payload.channel_mut(j)[t] = v;
        }
    }
    Ok(out)
}

fn column_mean(d: &Dataset, j: usize, t: usize) -> Option<f64> {
    let vals: Vec<f64> = d
        .instances
        .iter()
        .filter(|y| y.mask.is_observed(&y.payload, j, t))
        .map(|y| y.payload.channel(j)[t])
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnResult {
    pub predictions: Vec<Target>,
    /// Accuracy (classification) or R^2 (regression).
    pub score: f64,
    /// Distance evaluations per query.
    pub evals_per_query: f64,
}

/// k-NN baseline with optional k-NN imputation of both splits.
pub fn knn_baseline(train: &Dataset, test: &Dataset, k: usize, spec: &DistanceSpec, impute_k: Option<usize>) -> Result<KnnResult> {
    let measure = distance::resolve(spec)?;
    let (train, test) = match impute_k {
        Some(ik) => (knn_impute(train, train, ik, true)?, knn_impute(test, train, ik, false)?),
        None => (train.clone(), test.clone()),
    };
    let predictions = knn_predict(&train, &test, k, &*measure)?;
    Ok(KnnResult {
        score: score(&predictions, &test.targets),
        predictions,
        evals_per_query: train.len() as f64,
    })
}

/// Accuracy for class targets, R^2 for real targets.
pub fn score(predicted: &[Target], truth: &[Target]) -> f64 {
    match truth.first() {
        Some(Target::Real(_)) => {
            let y: Vec<f64> = truth.iter().filter_map(|t| t.real()).collect();
            let f: Vec<f64> = predicted.iter().filter_map(|t| t.real()).collect();
            r2(&y, &f)
        }
        _ => class_accuracy(predicted, truth),
    }
}

pub fn r2(y: &[f64], f: &[f64]) -> f64 {
    impute::internal_score(y, f, impute::Metric::R2).unwrap_or(f64::NAN)
}

/// Nearest-centroid classifier over flattened, equal-shape payloads.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    centroids: Vec<Vec<f64>>,
}

fn flatten(p: &Payload) -> Result<Vec<f64>> {
    match p {
        Payload::Vector(v) => Ok(v.clone()),
        Payload::Series(c) => Ok(c.concat()),
        Payload::Graph(_) => Err(Error::PayloadKind("nearest centroid needs numeric payloads".into())),
    }
}

impl NearestCentroid {
    pub fn fit(d: &Dataset) -> Result<Self> {
        let width = flatten(&d.instances[0].payload)?.len();
        let mut sums = vec![vec![0.0; width]; d.n_classes()];
        let mut counts = vec![0usize; d.n_classes()];
        for (x, t) in d.instances.iter().zip(&d.targets) {
            let v = flatten(&x.payload)?;
            if v.len() != width || v.iter().any(|a| a.is_nan()) {
                return Err(Error::Data(format!("`{}` is not a complete, equal-shape payload", x.id)));
            }
            let c = t.class().ok_or_else(|| Error::Config("nearest centroid needs class targets".into()))?;
            sums[c].iter_mut().zip(&v).for_each(|(s, a)| *s += a);
            counts[c] += 1;
        }
        for (s, &c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|a| *a /= c.max(1) as f64);
        }
        Ok(NearestCentroid { centroids: sums })
    }

    pub fn predict(&self, x: &Instance) -> Result<usize> {
        let v = flatten(&x.payload)?;
        let mut best = (0, f64::INFINITY);
        for (c, m) in self.centroids.iter().enumerate() {
            if m.len() != v.len() {
                return Err(Error::Data(format!("`{}` has {} values, expected {}", x.id, v.len(), m.len())));
            }
            let d: f64 = m.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (c, d);
            }
        }
        Ok(best.0)
    }

    pub fn predict_all(&self, d: &Dataset) -> Result<Vec<Target>> {
        d.instances.iter().map(|x| self.predict(x).map(Target::Class)).collect()
    }

    /// Label table keyed by instance id, as consumed by the meta distances.
    pub fn prediction_table(&self, sets: &[&Dataset]) -> Result<PredictionTable> {
        let mut rows = Vec::new();
        for d in sets {
            for x in &d.instances {
                rows.push((x.id.clone(), d.classes[self.predict(x)?].clone()));
            }
        }
        PredictionTable::from_labels(rows)
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

type Rotation = [[f64; 3]; 3];

fn apply(r: &Rotation, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2];
    }
    out
}

fn compose(a: &Rotation, b: &Rotation) -> Rotation {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Uniformly distributed rotation from a random unit quaternion.
fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotation_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rotation_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// One von Mises-Fisher draw on the 2-sphere with mean direction `+z`
/// (Wood's rejection sampler).
pub fn sample_vmf_north(kappa: f64, rng: &mut impl Rng) -> [f64; 3] {
    let p = 3.0;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + (p - 1.0) * (p - 1.0)).sqrt()) / (p - 1.0);
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + (p - 1.0) * (1.0 - x0 * x0).ln();
    let beta = Beta::new((p - 1.0) / 2.0, (p - 1.0) / 2.0).expect("valid beta parameters");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen();
        if kappa * w + (p - 1.0) * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - w * w).max(0.0).sqrt();
    unit([r * phi.cos(), r * phi.sin(), w])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VmfParams {
    pub n_per_class: usize,
    pub kappa: f64,
    /// Angle in radians between the two class mean directions; `None` draws
    /// an independent uniform rotation per class.
    pub separation: Option<f64>,
}

impl Default for VmfParams {
    fn default() -> Self {
        VmfParams {
            n_per_class: 150,
            kappa: 10.0,
            separation: None,
        }
    }
}

/// Two classes of unit vectors in R^3: vMF samples about the north pole,
/// each class moved by its own random rotation. With a fixed `separation`,
/// class 1's rotation is class 0's composed with a tilt of that angle and a
/// random spin instead.
pub fn sample_vmf_clusters(params: VmfParams, seed: u64) -> Result<Dataset> {
    if !(params.kappa > 0.0) {
        return Err(Error::Config("kappa must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = random_rotation(&mut rng);
    let r1 = match params.separation {
        None => random_rotation(&mut rng),
        Some(angle) => {
            let spin = rng.gen_range(0.0..std::f64::consts::TAU);
            compose(&r0, &compose(&rotation_x(angle), &rotation_z(spin)))
        }
    };
    let mut instances = Vec::with_capacity(2 * params.n_per_class);
    let mut labels = Vec::with_capacity(2 * params.n_per_class);
    for (c, rot) in [r0, r1].iter().enumerate() {
        for i in 0..params.n_per_class {
            let v = unit(apply(rot, sample_vmf_north(params.kappa, &mut rng)));
            instances.push(Instance::vector(format!("c{c}-{i}"), v.to_vec()));
            labels.push(c.to_string());
        }
    }
    Dataset::classification(instances, &labels)
}

/// Isotropic Gaussian blobs with centres drawn uniformly from `[-box, box]^dim`.
pub fn blobs(n: usize, n_classes: usize, dim: usize, spread: f64, center_box: f64, seed: u64) -> Result<Dataset> {
    if n_classes == 0 || dim == 0 {
        return Err(Error::Config("blobs need at least one class and one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(-center_box..=center_box)).collect())
        .collect();
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_classes;
        let x = centres[c]
            .iter()
            .map(|m| m + spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        instances.push(Instance::vector(format!("b{i}"), x));
        labels.push(c.to_string());
    }
    Dataset::classification(instances, &labels)
}

/// Two overlapping Gaussian classes in the plane, used for cost scaling.
pub fn scaling_blobs(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let shift = if c == 0 { -0.5 } else { 0.5 };
        let x = vec![
            shift + rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        instances.push(Instance::vector(format!("s{i}"), x));
        labels.push(c.to_string());
    }
    Dataset::classification(instances, &labels)
}

/// Least-squares fit `y = c * x` through the origin and its R^2
/// (against the mean of `y`).
pub fn fit_proportional(x: &[f64], y: &[f64]) -> (f64, f64) {
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
    let f: Vec<f64> = x.iter().map(|a| c * a).collect();
    (c, r2(y, &f))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOptions {
    pub data_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Overrides the experiment's tree count.
    pub trees: Option<usize>,
    pub r: usize,
    pub sizes: Vec<usize>,
    pub vmf: VmfParams,
    pub wl_depth: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            data_dir: PathBuf::from("data"),
            seeds: (0..5).collect(),
            trees: None,
            r: 5,
            sizes: vec![1000, 2000, 4000, 8000],
            vmf: VmfParams::default(),
            wl_depth: 3,
        }
    }
}

impl BenchOptions {
    fn path(&self, name: &str) -> Result<PathBuf> {
        let p = self.data_dir.join(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::Data(format!(
                "{} not found; run `tools/fetch.sh {}` to download and convert the benchmark data",
                p.display(),
                self.data_dir.display()
            )))
        }
    }

    fn forest(&self, task: Task, spec: Vec<DistanceSpec>, default_trees: usize, seed: u64) -> ForestConfig {
        let base = match task {
            Task::Classification => ForestConfig::classification(spec),
            Task::Regression => ForestConfig::regression(spec),
        };
        base.with_trees(self.trees.unwrap_or(default_trees)).with_r(self.r).with_seed(seed)
    }
}

pub const EXPERIMENTS: [&str; 8] = [
    "penguin",
    "sphere",
    "proteins",
    "vowels",
    "flood",
    "arrowhead_meta",
    "scaling",
    "blobs",
];

/// Per-seed metrics of one experiment plus their aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub experiment: String,
    pub columns: Vec<String>,
    /// One row per seed (or per size for `scaling`), aligned with `columns`.
    pub rows: Vec<(u64, Vec<f64>)>,
    pub summary: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Wall time; kept out of the written report so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl BenchReport {
    fn new(experiment: &str, columns: &[&str]) -> Self {
        BenchReport {
            experiment: experiment.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            notes: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self.columns.iter().position(|c| c == name).expect("unknown column");
        self.rows.iter().map(|r| r.1[k]).collect()
    }

    /// Adds `<column>_mean` and `<column>_std` (sample std) for every column.
    fn aggregate(&mut self) {
        for (k, name) in self.columns.iter().enumerate() {
            let v: Vec<f64> = self.rows.iter().map(|r| r.1[k]).collect();
            let (m, s) = mean_std(&v);
            self.summary.insert(format!("{name}_mean"), m);
            self.summary.insert(format!("{name}_std"), s);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("key,{}\n", self.columns.join(","));
        for (key, row) in &self.rows {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{key},{}\n", vals.join(",")));
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{}.json", self.experiment));
        let csv = dir.join(format!("{}.csv", self.experiment));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(vec![json, csv])
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "experiment {}", self.experiment)?;
        writeln!(f, "{:>8}{}", "key", self.columns.iter().map(|c| format!(" {c:>14}")).collect::<String>())?;
        for (key, row) in &self.rows {
            writeln!(f, "{key:>8}{}", row.iter().map(|v| format!(" {v:>14.6}")).collect::<String>())?;
        }
        for (k, v) in &self.summary {
            writeln!(f, "  {k} = {v:.6}")?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        write!(f, "  runtime {:.1} s", self.runtime_seconds)
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Runs a named experiment.
pub fn run_experiment(name: &str, opts: &BenchOptions) -> Result<BenchReport> {
    let start = Instant::now();
    let mut report = match name {
        "penguin" => penguin(opts),
        "sphere" => sphere(opts),
        "proteins" => proteins(opts),
        "vowels" => vowels(opts),
        "flood" => flood(opts),
        "arrowhead_meta" => arrowhead_meta(opts),
        "scaling" => scaling(opts),
        "blobs" => blob_tables(opts),
        other => Err(Error::Config(format!(
            "unknown experiment `{other}` (known: {})",
            EXPERIMENTS.join(", ")
        ))),
    }?;
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn load_penguins(opts: &BenchOptions) -> Result<Dataset> {
    let mut d = load_csv(opts.path("penguins.csv")?, "species")?;
    d.standardize();
    Ok(d)
}

/// PF(11 trees, r=5) against k-NN(k=5), both Euclidean, over 80/20 splits.
pub fn penguin(opts: &BenchOptions) -> Result<BenchReport> {
    let d = load_penguins(opts)?;
    let mut rep = BenchReport::new("penguin", &["acc_pf", "acc_knn", "knn_minus_pf"]);
    for &seed in &opts.seeds {
        let (train, test) = train_test_split(&d, 0.2, false, seed)?;
        let forest = fit(&train, &opts.forest(Task::Classification, vec![DistanceSpec::euclidean()], 11, seed))?;
        let acc_pf = class_accuracy(&forest.predict_many(&test.instances)?, &test.targets);
        let acc_knn = knn_baseline(&train, &test, 5, &DistanceSpec::euclidean(), None)?.score;
        rep.rows.push((seed, vec![acc_pf, acc_knn, acc_knn - acc_pf]));
    }
    rep.aggregate();
    Ok(rep)
}

/// Post-imputation accuracy on the sphere data with 50% MCAR entries:
/// GAP imputation + PF against k-NN imputation + k-NN.
pub fn sphere(opts: &BenchOptions) -> Result<BenchReport> {
    let mut rep = BenchReport::new("sphere", &["acc_pf", "acc_knn", "pf_minus_knn", "fallbacks"]);
    for &seed in &opts.seeds {
        let (acc_pf, acc_knn, fallbacks) = sphere_seed(opts, seed)?;
        rep.rows.push((seed, vec![acc_pf, acc_knn, acc_pf - acc_knn, fallbacks as f64]));
    }
    rep.aggregate();
    Ok(rep)
}

/// One sphere trial: `(PF accuracy, k-NN accuracy, imputation fallbacks)`.
pub fn sphere_seed(opts: &BenchOptions, seed: u64) -> Result<(f64, f64, usize)> {
    let full = sample_vmf_clusters(opts.vmf, seed)?;
    let (train, test) = train_test_split(&full, 0.5, true, seed)?;
    let train = inject_mcar(&train, 0.5, seed.wrapping_mul(2).wrapping_add(1))?;
    let test = inject_mcar(&test, 0.5, seed.wrapping_mul(2).wrapping_add(2))?;
    let fc = opts.forest(Task::Classification, vec![DistanceSpec::euclidean()], 11, seed);
    let icfg = ImputeConfig::default();
    let report = gap_impute_train(&train, &fc, &icfg)?;
    let forest = fit(&report.imputed, &fc)?;
    let test_imp = gap_impute_test(&report.imputed, &test, &forest, &icfg)?;
    let acc_pf = class_accuracy(&forest.predict_many(&test_imp.imputed.instances)?, &test.targets);
    let acc_knn = knn_baseline(&train, &test, 5, &DistanceSpec::euclidean(), Some(5))?.score;
    Ok((acc_pf, acc_knn, report.selected_record().fallbacks + test_imp.fallbacks))
}

/// WL-distance graph classification with an 80/10/10 split.
pub fn proteins(opts: &BenchOptions) -> Result<BenchReport> {
    let d = load_graph_jsonl(opts.path("proteins.jsonl")?)?;
    let spec = DistanceSpec::wl(opts.wl_depth);
    let mut rep = BenchReport::new("proteins", &["val_pf", "test_pf", "val_knn", "test_knn"]);
    for &seed in &opts.seeds {
        let (rest, test) = split_indices(&d, 0.1, false, seed)?;
        let rest_d = d.subset(&rest);
        let (train_i, val_i) = split_indices(&rest_d, 1.0 / 9.0, false, seed.wrapping_add(1))?;
        let (train, val, test) = (rest_d.subset(&train_i), rest_d.subset(&val_i), d.subset(&test));
        let forest = fit(&train, &opts.forest(Task::Classification, vec![spec.clone()], 11, seed))?;
        let val_pf = class_accuracy(&forest.predict_many(&val.instances)?, &val.targets);
        let test_pf = class_accuracy(&forest.predict_many(&test.instances)?, &test.targets);
        let val_knn = knn_baseline(&train, &val, 5, &spec, None)?.score;
        let test_knn = knn_baseline(&train, &test, 5, &spec, None)?.score;
        rep.rows.push((seed, vec![val_pf, test_pf, val_knn, test_knn]));
    }
    rep.aggregate();
    Ok(rep)
}

fn load_split(opts: &BenchOptions, stem: &str, task: Task) -> Result<(Dataset, Dataset)> {
    let mut train = load_series_jsonl(opts.path(&format!("{stem}_train.jsonl"))?, task)?;
    let mut test = load_series_jsonl(opts.path(&format!("{stem}_test.jsonl"))?, task)?;
    harmonize_classes(&mut train, &mut test)?;
    Ok((train, test))
}

/// Unequal-length multivariate series with dependent and independent DTW.
pub fn vowels(opts: &BenchOptions) -> Result<BenchReport> {
    let (train, test) = load_split(opts, "japanese_vowels", Task::Classification)?;
    let specs = vec![DistanceSpec::dtw_dependent(None), DistanceSpec::dtw_independent(None)];
    let knn = knn_baseline(&train, &test, 1, &DistanceSpec::dtw_dependent(None), None)?.score;
    let mut rep = BenchReport::new("vowels", &["acc_pf", "acc_knn1"]);
    for &seed in &opts.seeds {
        let forest = fit(&train, &opts.forest(Task::Classification, specs.clone(), 100, seed))?;
        let acc = class_accuracy(&forest.predict_many(&test.instances)?, &test.targets);
        rep.rows.push((seed, vec![acc, knn]));
    }
    rep.aggregate();
    Ok(rep)
}

/// Univariate series regression: PF(100 trees, DTW, MAD) against k-NN(k=5).
pub fn flood(opts: &BenchOptions) -> Result<BenchReport> {
    let (train, test) = load_split(opts, "flood", Task::Regression)?;
    let spec = DistanceSpec::dtw_dependent(None);
    let knn = knn_baseline(&train, &test, 5, &spec, None)?.score;
    let mut rep = BenchReport::new("flood", &["r2_pf", "r2_knn5"]);
    for &seed in &opts.seeds {
        let mut cfg = opts.forest(Task::Regression, vec![spec.clone()], 100, seed);
        cfg.purity = Purity::Mad;
        let forest = fit(&train, &cfg)?;
        let pred = forest.predict_many(&test.instances)?;
        rep.rows.push((seed, vec![score(&pred, &test.targets), knn]));
    }
    rep.aggregate();
    Ok(rep)
}

/// Meta-imputation: a nearest-centroid model's labels define the forest
/// distance; the downstream accuracy of that model on GAP-imputed test data
/// is compared with its accuracy on the linearly initialized test data.
pub fn arrowhead_meta(opts: &BenchOptions) -> Result<BenchReport> {
    let (train, test) = load_split(opts, "arrowhead", Task::Classification)?;
    let mut rep = BenchReport::new(
        "arrowhead_meta",
        &["acc_complete", "acc_init", "acc_gap", "gap_minus_init"],
    );
    for &seed in &opts.seeds {
        let row = arrowhead_meta_seed(opts, &train, &test, seed)?;
        rep.rows.push((seed, row.to_vec()));
    }
    rep.aggregate();
    Ok(rep)
}

/// One meta-imputation trial on given splits:
/// `[accuracy on complete test, on initialized test, on imputed test, gain]`.
pub fn arrowhead_meta_seed(opts: &BenchOptions, train: &Dataset, test: &Dataset, seed: u64) -> Result<[f64; 4]> {
    let model = NearestCentroid::fit(train)?;
    let acc_complete = class_accuracy(&model.predict_all(test)?, &test.targets);
    let missing = inject_mcar(test, 0.1, seed)?;
    let icfg = ImputeConfig {
        init: InitStrategy::Linear,
        ..Default::default()
    };
    let initialized = impute::initialize_with(&missing, train, &icfg, false)?;
    let table = std::sync::Arc::new(model.prediction_table(&[train, &initialized])?);
    let cfg = attach_meta_distance(
        &opts.forest(Task::Classification, Vec::new(), 11, seed),
        table,
        PredictionForm::Labels,
        train.instances.iter().map(|x| x.id.as_str()),
    )?;
    let forest = fit(train, &cfg)?;
    let imputed = gap_impute_test(train, &missing, &forest, &icfg)?;
    let acc_init = class_accuracy(&model.predict_all(&initialized)?, &test.targets);
    let acc_gap = class_accuracy(&model.predict_all(&imputed.imputed)?, &test.targets);
    Ok([acc_complete, acc_init, acc_gap, acc_gap - acc_init])
}

/// Mean distance evaluations per query for PF against k-NN's `N`.
pub fn scaling(opts: &BenchOptions) -> Result<BenchReport> {
    let seed = opts.seeds.first().copied().unwrap_or(0);
    let mut rep = BenchReport::new("scaling", &["n", "log2_n", "pf_evals", "knn_evals", "pf_over_knn"]);
    let queries = scaling_blobs(500, seed.wrapping_add(1_000_003))?;
    for &n in &opts.sizes {
        let train = scaling_blobs(n, seed)?;
        let forest = fit(&train, &opts.forest(Task::Classification, vec![DistanceSpec::euclidean()], 11, seed))?;
        let evals = forest.query_cost(&queries.instances)?;
        rep.rows.push((n as u64, vec![n as f64, (n as f64).log2(), evals, n as f64, evals / n as f64]));
    }
    let (c, fit_r2) = fit_proportional(&rep.column("log2_n"), &rep.column("pf_evals"));
    rep.summary.insert("c".into(), c);
    rep.summary.insert("r2_log_fit".into(), fit_r2);
    Ok(rep)
}

/// PF-11, PF-100 and k-NN(5) on blobs and the small public tables found in
/// the data directory; accuracies and mean ranks.
pub fn blob_tables(opts: &BenchOptions) -> Result<BenchReport> {
    let mut tables: Vec<(String, Dataset)> = vec![("blobs".into(), blobs(300, 3, 4, 2.0, 4.0, 7)?)];
    for (file, label) in [
        ("penguins.csv", "species"),
        ("iris.csv", "target"),
        ("wine.csv", "target"),
        ("breast_cancer.csv", "target"),
    ] {
        match opts.path(file) {
            Ok(p) => {
                let mut d = load_csv(p, label)?;
                d.standardize();
                tables.push((file.trim_end_matches(".csv").into(), d));
            }
            Err(e) => log::warn!("{e}"),
        }
    }
    let mut rep = BenchReport::new("blobs", &["acc_pf11", "acc_pf100", "acc_knn5", "rank_pf11", "rank_pf100", "rank_knn5"]);
    for (k, (name, d)) in tables.iter().enumerate() {
        let mut acc = [0.0; 3];
        for &seed in &opts.seeds {
            let (train, test) = train_test_split(d, 0.2, true, seed)?;
            for (m, trees) in [11usize, 100].iter().enumerate() {
                let mut cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_seed(seed);
                cfg.n_trees = *trees;
                cfg.r = opts.r;
                let f = fit(&train, &cfg)?;
                acc[m] += class_accuracy(&f.predict_many(&test.instances)?, &test.targets);
            }
            acc[2] += knn_baseline(&train, &test, 5, &DistanceSpec::euclidean(), None)?.score;
        }
        acc.iter_mut().for_each(|a| *a /= opts.seeds.len() as f64);
        let ranks = average_ranks(&acc);
        rep.rows.push((k as u64, vec![acc[0], acc[1], acc[2], ranks[0], ranks[1], ranks[2]]));
        rep.notes.push(format!("row {k}: {name} (N = {})", d.len()));
    }
    rep.aggregate();
    Ok(rep)
}

/// Ranks with 1 for the highest value; ties share the average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let above = v.iter().filter(|&&y| y > x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            above + (equal + 1.0) / 2.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vmf_samples_are_unit_and_concentrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut s, n) = ([0.0; 3], 1000);
        for _ in 0..n {
            let v = sample_vmf_north(500.0, &mut rng);
            assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-12);
            for k in 0..3 {
                s[k] += v[k];
            }
        }
        let m = unit(s);
        assert!(m[2] > 0.999);
    }

    #[test]
    fn vmf_clusters_deterministic() {
        let a = sample_vmf_clusters(VmfParams::default(), 5).unwrap();
        let b = sample_vmf_clusters(VmfParams::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert_eq!(a.n_classes(), 2);
    }

    #[test]
    fn one_nn_returns_training_label() {
        let d = blobs(30, 3, 2, 1.0, 5.0, 1).unwrap();
        let m = distance::resolve(&DistanceSpec::euclidean()).unwrap();
        let pred = knn_predict(&d, &d, 1, &*m).unwrap();
        assert_eq!(pred, d.targets);
        assert!(knn_neighbors(&d, &d.instances[0], 31, &*m).is_err());
    }

    #[test]
    fn knn_imputation_uses_nearest_observed_donors() {
        let nan = f64::NAN;
        let rows = [[0.0, 1.0], [0.0, 3.0], [10.0, 50.0], [0.0, nan]];
        let d = Dataset::classification(
            rows.iter()
                .enumerate()
                .map(|(i, r)| Instance::vector(format!("{i}"), r.to_vec()))
                .collect(),
            &["a", "a", "a", "a"],
        )
        .unwrap();
        let out = knn_impute(&d, &d, 2, true).unwrap();
        assert_eq!(out.instances[3].payload.get(0, 1), Some(2.0));
    }

    #[test]
    fn ranks_and_fits() {
        assert_eq!(average_ranks(&[0.9, 0.8, 0.9]), vec![1.5, 3.0, 1.5]);
        let (c, r2) = fit_proportional(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        assert_eq!(c, 2.0);
        assert_eq!(r2, 1.0);
    }
}
