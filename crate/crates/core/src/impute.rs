//! Iterative GAP imputation.
//!
//! Missing entries are first filled by a simple strategy, then repeatedly
//! replaced by proximity-weighted averages (continuous features) or
//! proximity-weighted votes (categorical features) over the donors observed
//! at the same position. Every observed entry is also re-imputed as
//! pseudo-missing; its reconstruction quality scores the iteration and the
//! best iteration's imputations are returned.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Payload, PayloadKind, Target, Task};
use crate::error::{Error, Result};
use crate::forest::{fit, Forest, ForestConfig};
use crate::gap::{compute_oob_proximities, compute_test_proximities, GapMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    #[default]
    Mean,
    Median,
    Knn,
    /// Linear interpolation along time (series only).
    Linear,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(InitStrategy::Mean),
            "median" => Ok(InitStrategy::Median),
            "knn" => Ok(InitStrategy::Knn),
            "linear" => Ok(InitStrategy::Linear),
            other => Err(Error::Config(format!("unknown init strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    R2,
    Rmse,
    Mae,
    /// Macro-averaged F1.
    F1,
    Accuracy,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::R2 | Metric::F1 | Metric::Accuracy)
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, Metric::F1 | Metric::Accuracy)
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r2" => Ok(Metric::R2),
            "rmse" => Ok(Metric::Rmse),
            "mae" => Ok(Metric::Mae),
            "f1" => Ok(Metric::F1),
            "accuracy" => Ok(Metric::Accuracy),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeConfig {
    pub init: InitStrategy,
    pub iterations: usize,
    /// Selection metric; applies to features of the matching type.
    pub metric: Metric,
    pub knn_k: usize,
    /// Initialize within label groups (training data only).
    pub condition_on_label: bool,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            init: InitStrategy::Mean,
            iterations: 5,
            metric: Metric::R2,
            knn_k: 5,
            condition_on_label: false,
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.init == InitStrategy::Knn && self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// One imputed entry of the returned dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputedEntry {
    pub instance: usize,
    pub channel: usize,
    pub t: usize,
    pub value: f64,
    /// Smallest and largest donor value with positive weight (continuous
    /// entries; equal to `value` for fallbacks and categorical entries).
    pub donor_min: f64,
    pub donor_max: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean over features of the selection metric; `NaN` when undefined.
    pub score: f64,
    /// Per-feature pseudo-missing scores (continuous features under the
    /// selection metric or R^2, categorical ones under F1 or accuracy).
    pub feature_scores: Vec<f64>,
    pub fallbacks: usize,
    pub uncovered: usize,
}

#[derive(Debug, Clone)]
pub struct ImputationReport {
    pub metric: Metric,
    pub iterations: Vec<IterationRecord>,
    pub selected: usize,
    pub imputed: Dataset,
    pub entries: Vec<ImputedEntry>,
}

impl ImputationReport {
    pub fn selected_record(&self) -> &IterationRecord {
        &self.iterations[self.selected]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric,
            "selected": self.selected,
            "iterations": self.iterations,
            "imputed_entries": self.entries.len(),
            "fallbacks": self.iterations[self.selected].fallbacks,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TestImputation {
    pub initialized: Dataset,
    pub imputed: Dataset,
    pub entries: Vec<ImputedEntry>,
    pub fallbacks: usize,
}

fn check_imputable(d: &Dataset) -> Result<()> {
    if d.kind() == Some(PayloadKind::Graph) {
        return Err(Error::PayloadKind("graph datasets cannot be imputed".into()));
    }
    Ok(())
}

/// Feature index of entry `(j, t)`: the coordinate for vectors, the channel
/// for series.
fn feature_of(payload: &Payload, j: usize, t: usize) -> usize {
    match payload {
        Payload::Vector(_) => t,
        _ => j,
    }
}

fn n_features(d: &Dataset) -> usize {
    match d.instances.first().map(|i| &i.payload) {
        Some(Payload::Vector(v)) => v.len(),
        Some(p) => p.n_channels(),
        None => 0,
    }
}

fn observed(d: &Dataset, k: usize, j: usize, t: usize) -> Option<f64> {
    let inst = &d.instances[k];
    inst.mask
        .is_observed(&inst.payload, j, t)
        .then(|| inst.payload.channel(j)[t])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Most frequent value; ties go to the smallest.
fn mode(v: &[f64]) -> f64 {
    let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for &x in v {
        counts.entry(ordered_key(x)).or_insert((x, 0)).1 += 1;
    }
    counts
        .values()
        .fold((f64::NAN, 0), |best, &(x, c)| if c > best.1 { (x, c) } else { best })
        .0
}

/// Order-preserving integer key of a finite float.
fn ordered_key(x: f64) -> u64 {
    let x = if x == 0.0 { 0.0 } else { x };
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Column statistic over the observed reference values at `(j, t)`.
struct ColumnStats<'a> {
    reference: &'a Dataset,
    strategy: InitStrategy,
    by_label: bool,
    cache: HashMap<(usize, usize, Option<usize>), Option<f64>>,
}

impl ColumnStats<'_> {
    fn value(&mut self, j: usize, t: usize, class: Option<usize>) -> Option<f64> {
        let class = if self.by_label { class } else { None };
        if let Some(&v) = self.cache.get(&(j, t, class)) {
            return v;
        }
        let mut vals: Vec<f64> = (0..self.reference.len())
            .filter(|&k| class.is_none() || self.reference.targets[k].class() == class)
            .filter_map(|k| observed(self.reference, k, j, t))
            .collect();
        let v = if vals.is_empty() {
            None
        } else if self.reference.is_categorical(j, t) {
            Some(mode(&vals))
        } else if self.strategy == InitStrategy::Median {
            Some(median(&mut vals))
        } else {
            Some(mean(&vals))
        };
        self.cache.insert((j, t, class), v);
        v
    }

    /// Label-group value, falling back to the global column.
    fn value_or_global(&mut self, j: usize, t: usize, class: Option<usize>) -> Option<f64> {
        self.value(j, t, class).or_else(|| self.value(j, t, None))
    }
}

/// Fills every masked entry of `d` using its own observed values.
pub fn initialize(d: &Dataset, cfg: &ImputeConfig) -> Result<Dataset> {
    initialize_with(d, d, cfg, cfg.condition_on_label)
}

/// Fills every masked entry of `d` using statistics and donors from
/// `reference` (which may be `d` itself).
pub fn initialize_with(d: &Dataset, reference: &Dataset, cfg: &ImputeConfig, use_labels: bool) -> Result<Dataset> {
    check_imputable(d)?;
    cfg.validate()?;
    let use_labels = use_labels && d.task == Task::Classification;
    let same = std::ptr::eq(d, reference);
    let mut out = d.clone();
    let mut stats = ColumnStats {
        reference,
        strategy: cfg.init,
        by_label: use_labels,
        cache: HashMap::new(),
    };
    let mut unfilled: Vec<String> = Vec::new();
    for (n, inst) in d.instances.iter().enumerate() {
        if inst.mask.is_empty() {
            continue;
        }
        let class = if use_labels { d.targets[n].class() } else { None };
        match cfg.init {
            InitStrategy::Mean | InitStrategy::Median => {
                for j in 0..inst.payload.n_channels() {
                    for &t in inst.mask.missing(j) {
                        match stats.value_or_global(j, t, class) {
                            Some(v) => out.instances[n].payload.channel_mut(j)[t] = v,
                            None => unfilled.push(format!("({j},{t})")),
                        }
                    }
                }
            }
            InitStrategy::Linear => {
                if inst.payload.kind() != PayloadKind::Series {
                    return Err(Error::Config("linear initialization needs series payloads".into()));
                }
                for j in 0..inst.payload.n_channels() {
                    if inst.mask.missing(j).is_empty() {
                        continue;
                    }
                    let channel = inst.payload.channel(j);
                    let obs: Vec<usize> = (0..channel.len()).filter(|&t| !inst.mask.is_missing(j, t)).collect();
                    for &t in inst.mask.missing(j) {
                        let v = if obs.is_empty() {
                            // whole channel missing: column statistic instead
                            stats.value_or_global(j, t, class)
                        } else {
                            Some(interpolate(channel, &obs, t))
                        };
                        match v {
                            Some(v) => out.instances[n].payload.channel_mut(j)[t] = v,
                            None => unfilled.push(format!("({j},{t})")),
                        }
                    }
                }
            }
            InitStrategy::Knn => {
                let mut donors: Vec<(f64, usize)> = (0..reference.len())
                    .filter(|&k| !(same && k == n))
                    .filter(|&k| class.is_none() || reference.targets[k].class() == class)
                    .filter_map(|k| masked_sq_distance(d, n, reference, k).map(|dist| (dist, k)))
                    .collect();
                donors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for j in 0..inst.payload.n_channels() {
                    for &t in inst.mask.missing(j) {
                        let vals: Vec<f64> = donors
                            .iter()
                            .filter_map(|&(_, k)| observed(reference, k, j, t))
                            .take(cfg.knn_k)
                            .collect();
                        let v = if vals.is_empty() {
                            stats.value_or_global(j, t, class)
                        } else if reference.is_categorical(j, t) {
                            Some(mode(&vals))
                        } else {
                            Some(mean(&vals))
                        };
                        match v {
                            Some(v) => out.instances[n].payload.channel_mut(j)[t] = v,
                            None => unfilled.push(format!("({j},{t})")),
                        }
                    }
                }
            }
        }
    }
    if !unfilled.is_empty() {
        unfilled.sort();
        unfilled.dedup();
        return Err(Error::Data(format!(
            "no observed values to initialize columns {}",
            unfilled.join(", ")
        )));
    }
    Ok(out)
}

/// Linear interpolation between the nearest observed neighbours, flat
/// beyond the ends.
fn interpolate(channel: &[f64], obs: &[usize], t: usize) -> f64 {
    match obs.binary_search(&t) {
        Ok(k) => channel[obs[k]],
        Err(0) => channel[obs[0]],
        Err(k) if k == obs.len() => channel[obs[k - 1]],
        Err(k) => {
            let (a, b) = (obs[k - 1], obs[k]);
            let w = (t - a) as f64 / (b - a) as f64;
            channel[a] + w * (channel[b] - channel[a])
        }
    }
}

/// Squared Euclidean distance over positions observed in both instances.
fn masked_sq_distance(a: &Dataset, n: usize, b: &Dataset, k: usize) -> Option<f64> {
    let (x, y) = (&a.instances[n], &b.instances[k]);
    let mut sum = 0.0;
    let mut used = 0;
    for j in 0..x.payload.n_channels().min(y.payload.n_channels()) {
        let len = x.payload.channel(j).len().min(y.payload.channel(j).len());
        for t in 0..len {
            if let (Some(u), Some(v)) = (observed(a, n, j, t), observed(b, k, j, t)) {
                sum += (u - v) * (u - v);
                used += 1;
            }
        }
    }
    (used > 0).then_some(sum)
}

/// Donor estimate at `(j, t)` for one proximity row.
enum Estimate {
    Value { value: f64, lo: f64, hi: f64 },
    NoDonor,
}

fn estimate(row: &[(usize, f64)], donors: &Dataset, j: usize, t: usize, categorical: bool) -> Estimate {
    if categorical {
        let mut votes: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for &(k, p) in row {
            if let Some(x) = observed(donors, k, j, t) {
                votes.entry(ordered_key(x)).or_insert((x, 0.0)).1 += p;
            }
        }
        let best = votes
            .values()
            .fold(None::<(f64, f64)>, |best, &(x, w)| match best {
                Some((_, bw)) if w <= bw + 1e-12 => best,
                _ => Some((x, w)),
            });
        return match best {
            Some((x, w)) if w > 0.0 => Estimate::Value { value: x, lo: x, hi: x },
            _ => Estimate::NoDonor,
        };
    }
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(k, p) in row {
        if p <= 0.0 {
            continue;
        }
        if let Some(x) = observed(donors, k, j, t) {
            num += p * x;
            den += p;
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if den > 0.0 {
        // renormalized weights give a convex combination; clamp off rounding
        Estimate::Value {
            value: (num / den).clamp(lo, hi),
            lo,
            hi,
        }
    } else {
        Estimate::NoDonor
    }
}

struct PassOutput {
    imputed: Dataset,
    entries: Vec<ImputedEntry>,
    fallbacks: usize,
    /// Per-feature `(truth, reconstruction)` pairs of pseudo-missing entries.
    pseudo: Vec<Vec<(f64, f64)>>,
    uncovered: usize,
}

/// One proximity-weighted pass over the rows of `gap`.
///
/// `targets` holds the current values and masks of the instances being
/// imputed; `fallback` their initialization values.
fn impute_pass(
    targets: &Dataset,
    fallback: &Dataset,
    donors: &Dataset,
    gap: &GapMatrix,
    pseudo: bool,
) -> PassOutput {
    let n_feat = n_features(targets);
    type RowOut = (usize, Vec<ImputedEntry>, Vec<(usize, f64, f64)>);
    let rows: Vec<RowOut> = (0..targets.len())
        .into_par_iter()
        .map(|n| {
            let inst = &targets.instances[n];
            let row = gap.row_of(n).map(|r| gap.row(r));
            let mut entries = Vec::new();
            let mut pairs = Vec::new();
            for j in 0..inst.payload.n_channels() {
                for &t in inst.mask.missing(j) {
                    let categorical = targets.is_categorical(j, t);
                    let est = row.map_or(Estimate::NoDonor, |r| estimate(r, donors, j, t, categorical));
                    entries.push(match est {
                        Estimate::Value { value, lo, hi } => ImputedEntry {
                            instance: n,
                            channel: j,
                            t,
                            value,
                            donor_min: lo,
                            donor_max: hi,
                            fallback: false,
                        },
                        Estimate::NoDonor => {
                            let v = fallback.instances[n].payload.channel(j)[t];
                            ImputedEntry {
                                instance: n,
                                channel: j,
                                t,
                                value: v,
                                donor_min: v,
                                donor_max: v,
                                fallback: true,
                            }
                        }
                    });
                }
                if let (true, Some(r)) = (pseudo, row) {
                    for t in 0..inst.payload.channel(j).len() {
                        if inst.mask.is_missing(j, t) {
                            continue;
                        }
                        let categorical = targets.is_categorical(j, t);
                        if let Estimate::Value { value, .. } = estimate(r, donors, j, t, categorical) {
                            let truth = inst.payload.channel(j)[t];
                            pairs.push((feature_of(&inst.payload, j, t), truth, value));
                        }
                    }
                }
            }
            (n, entries, pairs)
        })
        .collect();

    let mut imputed = targets.clone();
    let mut all_entries = Vec::new();
    let mut pseudo_pairs = vec![Vec::new(); n_feat];
    let mut fallbacks = 0;
    for (_, entries, pairs) in rows {
        for e in entries {
            imputed.instances[e.instance].payload.channel_mut(e.channel)[e.t] = e.value;
            fallbacks += e.fallback as usize;
            all_entries.push(e);
        }
        for (f, truth, value) in pairs {
            pseudo_pairs[f].push((truth, value));
        }
    }
    let uncovered = (0..targets.len())
        .filter(|&n| gap.row_of(n).is_none() && !targets.instances[n].mask.is_empty())
        .count();
    PassOutput {
        imputed,
        entries: all_entries,
        fallbacks,
        pseudo: pseudo_pairs,
        uncovered,
    }
}

/// Scores reconstructed values against the truth.
///
/// R^2 is `NaN` when the truth is constant.
pub fn internal_score(truth: &[f64], imputed: &[f64], metric: Metric) -> Result<f64> {
    if truth.len() != imputed.len() {
        return Err(Error::Data(format!(
            "score inputs differ in length ({} vs {})",
            truth.len(),
            imputed.len()
        )));
    }
    if truth.is_empty() {
        return Ok(f64::NAN);
    }
    let n = truth.len() as f64;
    Ok(match metric {
        Metric::R2 => {
            let m = mean(truth);
            let ss_tot: f64 = truth.iter().map(|y| (y - m).powi(2)).sum();
            let ss_res: f64 = truth.iter().zip(imputed).map(|(y, f)| (y - f).powi(2)).sum();
            if ss_tot == 0.0 {
                f64::NAN
            } else {
                1.0 - ss_res / ss_tot
            }
        }
        Metric::Rmse => (truth.iter().zip(imputed).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / n).sqrt(),
        Metric::Mae => truth.iter().zip(imputed).map(|(y, f)| (y - f).abs()).sum::<f64>() / n,
        Metric::Accuracy => truth.iter().zip(imputed).filter(|(y, f)| y == f).count() as f64 / n,
        Metric::F1 => {
            let mut classes: Vec<u64> = truth.iter().chain(imputed).map(|&x| ordered_key(x)).collect();
            classes.sort_unstable();
            classes.dedup();
            let f1s = classes.iter().map(|&c| {
                let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
                for (&y, &f) in truth.iter().zip(imputed) {
                    let (y, f) = (ordered_key(y) == c, ordered_key(f) == c);
                    match (y, f) {
                        (true, true) => tp += 1.0,
                        (false, true) => fp += 1.0,
                        (true, false) => fneg += 1.0,
                        _ => {}
                    }
                }
                if tp == 0.0 {
                    0.0
                } else {
                    2.0 * tp / (2.0 * tp + fp + fneg)
                }
            });
            f1s.sum::<f64>() / classes.len() as f64
        }
    })
}

fn categorical_feature(d: &Dataset, f: usize) -> bool {
    match d.instances.first().map(|i| &i.payload) {
        Some(Payload::Vector(_)) => d.is_categorical(0, f),
        _ => false,
    }
}

/// Per-feature scores and the iteration score for the selection metric.
fn score_iteration(d: &Dataset, pseudo: &[Vec<(f64, f64)>], metric: Metric) -> Result<(f64, Vec<f64>)> {
    let mut per_feature = Vec::with_capacity(pseudo.len());
    let mut selected = Vec::new();
    for (f, pairs) in pseudo.iter().enumerate() {
        let categorical = categorical_feature(d, f);
        let m = match (categorical, metric.is_categorical()) {
            (true, true) | (false, false) => metric,
            (true, false) => Metric::F1,
            (false, true) => Metric::R2,
        };
        let (truth, imputed): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let s = internal_score(&truth, &imputed, m)?;
        per_feature.push(s);
        if categorical == metric.is_categorical() && !s.is_nan() {
            selected.push(s);
        }
    }
    let score = if selected.is_empty() { f64::NAN } else { mean(&selected) };
    Ok((score, per_feature))
}

/// Forest seed used by imputation iteration `iteration`.
pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    // splitmix64 step keeps iteration seeds decorrelated
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(iteration as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Iterative GAP imputation of a training set.
pub fn gap_impute_train(d: &Dataset, forest_cfg: &ForestConfig, cfg: &ImputeConfig) -> Result<ImputationReport> {
    check_imputable(d)?;
    cfg.validate()?;
    let n_feat = n_features(d);
    let any_matching = (0..n_feat).any(|f| categorical_feature(d, f) == cfg.metric.is_categorical());
    if !any_matching {
        return Err(Error::Config(format!(
            "metric {:?} does not apply to any feature of this dataset",
            cfg.metric
        )));
    }
    let init = initialize(d, cfg)?;
    let mut current = init.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut outputs: Vec<(Dataset, Vec<ImputedEntry>)> = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let mut fc = forest_cfg.clone();
        fc.seed = iteration_seed(forest_cfg.seed, it);
        let forest = fit(&current, &fc)?;
        let gap = compute_oob_proximities(&forest);
        let pass = impute_pass(&current, &init, &current, &gap, true);
        let (score, feature_scores) = score_iteration(d, &pass.pseudo, cfg.metric)?;
        log::info!(
            "imputation iteration {it}: score {score:.6}, {} fallbacks",
            pass.fallbacks
        );
        records.push(IterationRecord {
            iteration: it,
            score,
            feature_scores,
            fallbacks: pass.fallbacks,
            uncovered: pass.uncovered,
        });
        outputs.push((pass.imputed.clone(), pass.entries));
        current = pass.imputed;
    }
    let selected = select_iteration(&records, cfg.metric);
    let (imputed, entries) = outputs.swap_remove(selected);
    Ok(ImputationReport {
        metric: cfg.metric,
        iterations: records,
        selected,
        imputed,
        entries,
    })
}

/// Best score among iterations with a defined score (first on ties); the
/// last iteration when none is defined.
pub fn select_iteration(records: &[IterationRecord], metric: Metric) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        if r.score.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) if metric.higher_is_better() => r.score > b,
            Some((_, b)) => r.score < b,
        };
        if better {
            best = Some((r.iteration, r.score));
        }
    }
    best.map_or_else(
        || {
            log::warn!("no iteration produced a defined internal score; keeping the last");
            records.len() - 1
        },
        |b| b.0,
    )
}

/// Imputes a test set with test-to-train proximities of a fitted forest.
///
/// Test entries are initialized from `train` statistics without labels;
/// donors are the observed entries of `train`, which must be the data the
/// forest was fitted on.
pub fn gap_impute_test(train: &Dataset, test: &Dataset, forest: &Forest, cfg: &ImputeConfig) -> Result<TestImputation> {
    check_imputable(test)?;
    cfg.validate()?;
    if train.len() != forest.n_train() {
        return Err(Error::Data(format!(
            "training set has {} instances but the forest was fitted on {}",
            train.len(),
            forest.n_train()
        )));
    }
    for inst in &test.instances {
        for j in 0..inst.payload.n_channels() {
            for &t in inst.mask.missing(j) {
                let aligned = train
                    .instances
                    .iter()
                    .any(|k| j < k.payload.n_channels() && t < k.payload.channel(j).len());
                if !aligned {
                    return Err(Error::Data(format!(
                        "test instance `{}` position ({j},{t}) has no aligned training position",
                        inst.id
                    )));
                }
            }
        }
    }
    let initialized = initialize_with(test, train, cfg, false)?;
    let gap = compute_test_proximities(forest, &initialized)?;
    let pass = impute_pass(&initialized, &initialized, train, &gap, false);
    Ok(TestImputation {
        initialized,
        imputed: pass.imputed,
        entries: pass.entries,
        fallbacks: pass.fallbacks,
    })
}

/// Fraction of matching targets.
pub fn class_accuracy(predicted: &[Target], truth: &[Target]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}
