//! Proximity trees and forests.
//!
//! Classification nodes split on one exemplar per class present in the node;
//! regression nodes split on exactly two distinct exemplars. Instances descend
//! to the branch of their nearest exemplar. Each tree is grown on a bootstrap
//! resample whose multiplicities are kept for the GAP proximities.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Instance, Target, Task};
use crate::distance::{self, DistanceMeasure, DistanceSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceChoice {
    #[default]
    PerNode,
    PerTree,
}

impl std::str::FromStr for DistanceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-node" | "per_node" | "node" => Ok(DistanceChoice::PerNode),
            "per-tree" | "per_tree" | "tree" => Ok(DistanceChoice::PerTree),
            other => Err(Error::Config(format!("unknown distance choice `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purity {
    Gini,
    Variance,
    /// Mean absolute deviation about the node median.
    Mad,
}

impl std::str::FromStr for Purity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Purity::Gini),
            "variance" | "var" => Ok(Purity::Variance),
            "mad" => Ok(Purity::Mad),
            other => Err(Error::Config(format!("unknown purity `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate splits evaluated per node.
    pub r: usize,
    pub distances: Vec<DistanceSpec>,
    #[serde(default)]
    pub distance_choice: DistanceChoice,
    pub task: Task,
    pub purity: Purity,
    /// `None` grows until the other stopping rules fire.
    #[serde(default)]
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl ForestConfig {
    pub fn classification(distances: Vec<DistanceSpec>) -> Self {
        ForestConfig {
            n_trees: 11,
            r: 5,
            distances,
            distance_choice: DistanceChoice::PerNode,
            task: Task::Classification,
            purity: Purity::Gini,
            max_depth: None,
            min_leaf: 1,
            seed: 0,
        }
    }

    pub fn regression(distances: Vec<DistanceSpec>) -> Self {
        ForestConfig {
            task: Task::Regression,
            purity: Purity::Variance,
            ..ForestConfig::classification(distances)
        }
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_r(mut self, r: usize) -> Self {
        self.r = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.r == 0 {
            return Err(Error::Config("r must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        if self.distances.is_empty() {
            return Err(Error::Config("at least one distance is required".into()));
        }
        match (self.task, self.purity) {
            (Task::Classification, Purity::Gini) | (Task::Regression, Purity::Variance | Purity::Mad) => Ok(()),
            (task, purity) => Err(Error::Config(format!("purity {purity:?} does not apply to {task:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Single class, or zero target spread for regression.
    Pure,
    MinLeaf,
    MaxDepth,
    /// No candidate produced at least two nonempty children (or, for
    /// regression, an impurity decrease).
    NoProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// In-bag members `(training index, multiplicity)`, sorted by index.
    pub members: Vec<(usize, u32)>,
    /// `|M|`: total in-bag multiplicity.
    pub weight: u32,
    /// Multiplicity-weighted class counts (classification only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_counts: Vec<u32>,
    /// Multiplicity-weighted target mean (regression only).
    #[serde(default)]
    pub mean: f64,
    pub depth: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Internal {
        /// Index into the forest's distance list.
        distance: usize,
        /// Training indices; branch `b` belongs to `exemplars[b]`.
        exemplars: Vec<usize>,
        children: Vec<usize>,
    },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node arena; the root is node 0.
    pub nodes: Vec<Node>,
    /// Bootstrap multiplicities `c_j(t)` over the training set.
    pub multiplicity: Vec<u32>,
    /// Leaf reached by every out-of-bag training instance, `(index, node)`.
    pub oob_leaves: Vec<(usize, usize)>,
    pub depth: usize,
}

impl Tree {
    pub fn leaf(&self, node: usize) -> &Leaf {
        match &self.nodes[node] {
            Node::Leaf(l) => l,
            Node::Internal { .. } => panic!("node {node} is not a leaf"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Leaf)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf(l) => Some((i, l)),
            Node::Internal { .. } => None,
        })
    }

    pub fn is_oob(&self, i: usize) -> bool {
        self.multiplicity[i] == 0
    }

    pub fn oob_set(&self) -> Vec<usize> {
        (0..self.multiplicity.len()).filter(|&i| self.is_oob(i)).collect()
    }
}

/// Path taken by one query through one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub leaf: usize,
    /// Internal nodes visited.
    pub rounds: usize,
    /// Distance evaluations performed.
    pub evals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
    /// Training data; exemplars and leaf members index into it.
    pub train: Dataset,
    #[serde(skip)]
    measures: Vec<Arc<dyn DistanceMeasure>>,
}

/// Out-of-bag predictions; `None` where the instance was in-bag for every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPredictions {
    pub predictions: Vec<Option<Target>>,
}

impl OobPredictions {
    pub fn coverage(&self) -> Vec<bool> {
        self.predictions.iter().map(Option::is_some).collect()
    }

    pub fn covered(&self) -> usize {
        self.predictions.iter().filter(|p| p.is_some()).count()
    }
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Index of the largest score; scores within [`TIE_TOLERANCE`] of the
/// maximum count as tied and the lowest index wins.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s >= max - TIE_TOLERANCE).unwrap_or(0)
}

fn resolve_measures(cfg: &ForestConfig, d: &Dataset) -> Result<Vec<Arc<dyn DistanceMeasure>>> {
    let kind = d.kind();
    cfg.distances
        .iter()
        .map(|spec| {
            let m = distance::resolve(spec)?;
            if let Some(kind) = kind {
                if !m.accepts(kind) {
                    return Err(Error::PayloadKind(format!(
                        "distance `{}` does not accept {kind} payloads",
                        spec.name
                    )));
                }
            }
            Ok(m)
        })
        .collect()
}

/// Fits a forest; trees are grown in parallel, each from its own random
/// stream, so the result does not depend on scheduling.
pub fn fit(d: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Data("cannot fit on an empty dataset".into()));
    }
    if d.task != cfg.task {
        return Err(Error::Config(format!(
            "dataset task {:?} does not match configured task {:?}",
            d.task, cfg.task
        )));
    }
    d.validate()?;
    let measures = resolve_measures(cfg, d)?;
    let grower = Grower { d, cfg, measures: &measures };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let start = Instant::now();
            let tree = grower.grow(t)?;
            log::info!(
                "tree {t}: depth {}, {} nodes, grown in {:.1} ms",
                tree.depth,
                tree.nodes.len(),
                start.elapsed().as_secs_f64() * 1e3
            );
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        config: cfg.clone(),
        trees,
        train: d.clone(),
        measures,
    })
}

struct Grower<'a> {
    d: &'a Dataset,
    cfg: &'a ForestConfig,
    measures: &'a [Arc<dyn DistanceMeasure>],
}

struct Candidate {
    distance: usize,
    exemplars: Vec<usize>,
    branches: Vec<Vec<(usize, u32)>>,
    score: f64,
}

impl Grower<'_> {
    fn grow(&self, t: usize) -> Result<Tree> {
        let n = self.d.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(t as u64);
        let mut multiplicity = vec![0u32; n];
        for _ in 0..n {
            multiplicity[rng.gen_range(0..n)] += 1;
        }
        let tree_distance = rng.gen_range(0..self.measures.len());
        let root: Vec<(usize, u32)> = multiplicity
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();

        let mut nodes = vec![Node::Leaf(self.leaf(Vec::new(), 0, StopReason::Pure))];
        let mut stack = vec![(0usize, root, 0usize)];
        let mut depth = 0;
        while let Some((id, members, node_depth)) = stack.pop() {
            depth = depth.max(node_depth);
            if let Some(stop) = self.stop_rule(&members, node_depth) {
                nodes[id] = Node::Leaf(self.leaf(members, node_depth, stop));
                continue;
            }
            match self.best_split(&members, tree_distance, &mut rng)? {
                None => nodes[id] = Node::Leaf(self.leaf(members, node_depth, StopReason::NoProgress)),
                Some(c) => {
                    let mut children = Vec::with_capacity(c.branches.len());
                    for branch in c.branches {
                        let child = nodes.len();
                        nodes.push(Node::Leaf(self.leaf(Vec::new(), 0, StopReason::Pure)));
                        children.push(child);
                        stack.push((child, branch, node_depth + 1));
                    }
                    nodes[id] = Node::Internal {
                        distance: c.distance,
                        exemplars: c.exemplars,
                        children,
                    };
                }
            }
        }

        let mut tree = Tree {
            nodes,
            multiplicity,
            oob_leaves: Vec::new(),
            depth,
        };
        let mut oob = Vec::new();
        for i in tree.oob_set() {
            let r = route_tree(&tree, self.measures, self.d, &self.d.instances[i], t)?;
            oob.push((i, r.leaf));
        }
        tree.oob_leaves = oob;
        Ok(tree)
    }

    fn stop_rule(&self, members: &[(usize, u32)], depth: usize) -> Option<StopReason> {
        let weight: u32 = members.iter().map(|m| m.1).sum();
        let first = self.d.targets[members[0].0];
        if members.iter().all(|&(i, _)| self.d.targets[i] == first) {
            return Some(StopReason::Pure);
        }
        if (weight as usize) < self.cfg.min_leaf {
            return Some(StopReason::MinLeaf);
        }
        if self.cfg.max_depth.is_some_and(|m| depth >= m) {
            return Some(StopReason::MaxDepth);
        }
        if members.len() < 2 {
            return Some(StopReason::NoProgress);
        }
        None
    }

    fn leaf(&self, members: Vec<(usize, u32)>, depth: usize, stop: StopReason) -> Leaf {
        let weight: u32 = members.iter().map(|m| m.1).sum();
        let mut members = members;
        members.sort_unstable_by_key(|m| m.0);
        let (class_counts, mean) = match self.d.task {
            Task::Classification => {
                let mut counts = vec![0u32; self.d.n_classes()];
                for &(i, c) in &members {
                    if let Target::Class(k) = self.d.targets[i] {
                        counts[k] += c;
                    }
                }
                (counts, 0.0)
            }
            Task::Regression => {
                let sum: f64 = members
                    .iter()
                    .map(|&(i, c)| c as f64 * self.d.targets[i].real().unwrap_or(0.0))
                    .sum();
                (Vec::new(), if weight > 0 { sum / weight as f64 } else { 0.0 })
            }
        };
        Leaf {
            members,
            weight,
            class_counts,
            mean,
            depth,
            stop,
        }
    }

    fn best_split(
        &self,
        members: &[(usize, u32)],
        tree_distance: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Candidate>> {
        let parent = impurity(self.d, self.cfg.purity, members);
        let mut best: Option<Candidate> = None;
        for _ in 0..self.cfg.r {
            let distance = match self.cfg.distance_choice {
                DistanceChoice::PerNode => rng.gen_range(0..self.measures.len()),
                DistanceChoice::PerTree => tree_distance,
            };
            let exemplars = self.sample_exemplars(members, rng);
            let measure = &*self.measures[distance];
            let mut branches: Vec<Vec<(usize, u32)>> = vec![Vec::new(); exemplars.len()];
            for &(i, c) in members {
                let b = nearest(measure, &self.d.instances[i], &exemplars, self.d)?;
                branches[b].push((i, c));
            }
            let (exemplars, branches): (Vec<usize>, Vec<_>) = exemplars
                .into_iter()
                .zip(branches)
                .filter(|(_, b)| !b.is_empty())
                .unzip();
            if branches.len() < 2 {
                continue;
            }
            let total: u32 = members.iter().map(|m| m.1).sum();
            let score: f64 = branches
                .iter()
                .map(|b| {
                    let w: u32 = b.iter().map(|m| m.1).sum();
                    w as f64 / total as f64 * impurity(self.d, self.cfg.purity, b)
                })
                .sum();
            if self.cfg.task == Task::Regression && !(score < parent) {
                continue;
            }
            if best.as_ref().map_or(true, |b| score < b.score) {
                best = Some(Candidate {
                    distance,
                    exemplars,
                    branches,
                    score,
                });
            }
        }
        Ok(best)
    }

    fn sample_exemplars(&self, members: &[(usize, u32)], rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self.d.task {
            Task::Classification => {
                // one exemplar per class present, drawn from the in-bag multiset
                let mut by_class: Vec<Vec<(usize, u32)>> = vec![Vec::new(); self.d.n_classes()];
                for &(i, c) in members {
                    if let Target::Class(k) = self.d.targets[i] {
                        by_class[k].push((i, c));
                    }
                }
                by_class
                    .iter()
                    .filter(|g| !g.is_empty())
                    .map(|g| {
                        let total: u32 = g.iter().map(|m| m.1).sum();
                        let mut pick = rng.gen_range(0..total);
                        for &(i, c) in g {
                            if pick < c {
                                return i;
                            }
                            pick -= c;
                        }
                        unreachable!("pick is below the class weight")
                    })
                    .collect()
            }
            Task::Regression => members
                .choose_multiple(rng, 2)
                .map(|m| m.0)
                .collect(),
        }
    }
}

/// Branch of the nearest exemplar; ties go to the lowest branch.
fn nearest(measure: &dyn DistanceMeasure, x: &Instance, exemplars: &[usize], d: &Dataset) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (b, &e) in exemplars.iter().enumerate() {
        let dist = measure.distance(x, &d.instances[e])?;
        if dist.is_nan() {
            return Err(Error::distance(measure.name(), format!("NaN distance for `{}`", x.id)));
        }
        if b == 0 || dist < best.1 {
            best = (b, dist);
        }
    }
    Ok(best.0)
}

fn route_tree(
    tree: &Tree,
    measures: &[Arc<dyn DistanceMeasure>],
    d: &Dataset,
    x: &Instance,
    t: usize,
) -> Result<Route> {
    let mut node = 0;
    let mut rounds = 0;
    let mut evals = 0;
    loop {
        match &tree.nodes[node] {
            Node::Leaf(_) => return Ok(Route { leaf: node, rounds, evals }),
            Node::Internal {
                distance,
                exemplars,
                children,
            } => {
                let b = nearest(&*measures[*distance], x, exemplars, d).map_err(|e| match e {
                    Error::Distance { name, message } => Error::Distance {
                        name,
                        message: format!("{message} (tree {t}, node {node}, depth {rounds})"),
                    },
                    other => other,
                })?;
                rounds += 1;
                evals += exemplars.len();
                node = children[b];
            }
        }
    }
}

/// Size-weighted impurity of an in-bag multiset.
pub fn impurity(d: &Dataset, purity: Purity, members: &[(usize, u32)]) -> f64 {
    let weight: f64 = members.iter().map(|m| m.1 as f64).sum();
    if weight == 0.0 {
        return 0.0;
    }
    match purity {
        Purity::Gini => {
            let mut counts = vec![0.0; d.n_classes()];
            for &(i, c) in members {
                if let Target::Class(k) = d.targets[i] {
                    counts[k] += c as f64;
                }
            }
            1.0 - counts.iter().map(|c| (c / weight).powi(2)).sum::<f64>()
        }
        Purity::Variance => {
            let y = |i: usize| d.targets[i].real().unwrap_or(0.0);
            let mean = members.iter().map(|&(i, c)| c as f64 * y(i)).sum::<f64>() / weight;
            members.iter().map(|&(i, c)| c as f64 * (y(i) - mean).powi(2)).sum::<f64>() / weight
        }
        Purity::Mad => {
            let mut ys: Vec<(f64, u32)> = members
                .iter()
                .map(|&(i, c)| (d.targets[i].real().unwrap_or(0.0), c))
                .collect();
            ys.sort_by(|a, b| a.0.total_cmp(&b.0));
            let median = weighted_median(&ys);
            ys.iter().map(|&(y, c)| c as f64 * (y - median).abs()).sum::<f64>() / weight
        }
    }
}

/// Lower weighted median of sorted `(value, weight)` pairs.
fn weighted_median(sorted: &[(f64, u32)]) -> f64 {
    let total: u64 = sorted.iter().map(|s| s.1 as u64).sum();
    let half = total.div_ceil(2);
    let mut acc = 0u64;
    for &(y, c) in sorted {
        acc += c as u64;
        if acc >= half {
            return y;
        }
    }
    sorted.last().map_or(0.0, |s| s.0)
}

impl Forest {
    pub fn measures(&self) -> &[Arc<dyn DistanceMeasure>] {
        &self.measures
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    fn check_kind(&self, x: &Instance) -> Result<()> {
        match self.train.kind() {
            Some(k) if k != x.payload.kind() => Err(Error::PayloadKind(format!(
                "forest was trained on {k} payloads, `{}` is {}",
                x.id,
                x.payload.kind()
            ))),
            _ => Ok(()),
        }
    }

    /// Routes `x` through tree `t`.
    pub fn route(&self, t: usize, x: &Instance) -> Result<Route> {
        self.check_kind(x)?;
        route_tree(&self.trees[t], &self.measures, &self.train, x, t)
    }

    /// Leaf reached in every tree.
    pub fn route_all(&self, x: &Instance) -> Result<Vec<Route>> {
        self.check_kind(x)?;
        (0..self.trees.len())
            .map(|t| route_tree(&self.trees[t], &self.measures, &self.train, x, t))
            .collect()
    }

    /// Per-tree vote of a leaf: its in-bag class distribution.
    ///
    /// Pure leaves vote for their single class. Impure leaves (cut by
    /// `max_depth`, `min_leaf` or no progress) cast a split vote, which keeps
    /// the ensemble vote equal to the GAP-weighted vote.
    fn leaf_vote(leaf: &Leaf, scores: &mut [f64]) {
        for (k, &c) in leaf.class_counts.iter().enumerate() {
            scores[k] += c as f64 / leaf.weight as f64;
        }
    }

    fn aggregate<'a>(&self, leaves: impl Iterator<Item = &'a Leaf>) -> Option<Target> {
        match self.config.task {
            Task::Classification => {
                let mut scores = vec![0.0; self.train.n_classes()];
                let mut n = 0usize;
                for leaf in leaves {
                    Self::leaf_vote(leaf, &mut scores);
                    n += 1;
                }
                (n > 0).then(|| Target::Class(argmax_lowest(&scores)))
            }
            Task::Regression => {
                let (mut sum, mut n) = (0.0, 0usize);
                for leaf in leaves {
                    sum += leaf.mean;
                    n += 1;
                }
                (n > 0).then(|| Target::Real(sum / n as f64))
            }
        }
    }

    /// Class scores summed over trees (classification only).
    pub fn predict_scores(&self, x: &Instance) -> Result<Vec<f64>> {
        let routes = self.route_all(x)?;
        let mut scores = vec![0.0; self.train.n_classes()];
        for (t, r) in routes.iter().enumerate() {
            Self::leaf_vote(self.trees[t].leaf(r.leaf), &mut scores);
        }
        let n = self.trees.len() as f64;
        scores.iter_mut().for_each(|s| *s /= n);
        Ok(scores)
    }

    pub fn predict(&self, x: &Instance) -> Result<Target> {
        let routes = self.route_all(x)?;
        Ok(self
            .aggregate(routes.iter().enumerate().map(|(t, r)| self.trees[t].leaf(r.leaf)))
            .expect("forest has at least one tree"))
    }

    pub fn predict_many(&self, xs: &[Instance]) -> Result<Vec<Target>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Mean distance evaluations per query, summed over trees.
    pub fn query_cost(&self, xs: &[Instance]) -> Result<f64> {
        let total: usize = xs
            .par_iter()
            .map(|x| Ok(self.route_all(x)?.iter().map(|r| r.evals).sum::<usize>()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(total as f64 / xs.len().max(1) as f64)
    }

    /// Out-of-bag prediction for every training instance, using only trees
    /// where it was not drawn.
    pub fn predict_oob(&self) -> OobPredictions {
        let mut per_instance: Vec<Vec<&Leaf>> = vec![Vec::new(); self.train.len()];
        for tree in &self.trees {
            for &(i, leaf) in &tree.oob_leaves {
                per_instance[i].push(tree.leaf(leaf));
            }
        }
        OobPredictions {
            predictions: per_instance
                .into_iter()
                .map(|leaves| self.aggregate(leaves.into_iter()))
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Forest::from_bytes(&bytes)
    }

    /// Model file: a JSON header line (format, version, body length and
    /// SHA-256) followed by the JSON body.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(self).map_err(|e| Error::Model(e.to_string()))?;
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION.into(),
            bytes: body.len(),
            sha256: hex::encode(Sha256::digest(&body)),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| Error::Model(e.to_string()))?;
        out.push(b'\n');
        out.write_all(&body).expect("writing to a Vec cannot fail");
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Forest> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Model("missing header line".into()))?;
        let header: ModelHeader =
            serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Model(format!("bad header: {e}")))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unknown format `{}`", header.format)));
        }
        let major = |v: &str| v.split('.').next().unwrap_or("").to_owned();
        if major(&header.version) != major(MODEL_VERSION) {
            return Err(Error::Model(format!(
                "version {} is incompatible with {MODEL_VERSION}",
                header.version
            )));
        }
        let body = &bytes[split + 1..];
        if body.len() != header.bytes || hex::encode(Sha256::digest(body)) != header.sha256 {
            return Err(Error::Model("checksum mismatch (truncated or corrupted file)".into()));
        }
        let mut forest: Forest =
            serde_json::from_slice(body).map_err(|e| Error::Model(format!("bad body: {e}")))?;
        forest.measures = resolve_measures(&forest.config, &forest.train)?;
        Ok(forest)
    }
}

pub const MODEL_FORMAT: &str = "pfgap-forest";
pub const MODEL_VERSION: &str = "1.0";

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: String,
    bytes: usize,
    sha256: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(points: &[(f64, &str)]) -> Dataset {
        let inst = points
            .iter()
            .enumerate()
            .map(|(i, (x, _))| Instance::vector(format!("p{i}"), vec![*x]))
            .collect();
        let labels: Vec<&str> = points.iter().map(|p| p.1).collect();
        Dataset::classification(inst, &labels).unwrap()
    }

    fn cfg() -> ForestConfig {
        ForestConfig::classification(vec![DistanceSpec::euclidean()])
    }

    #[test]
    fn two_points_two_classes() {
        let d = toy(&[(0.0, "a"), (1.0, "b")]);
        for seed in 0..20 {
            let f = fit(&d, &cfg().with_trees(1).with_seed(seed)).unwrap();
            let tree = &f.trees[0];
            let inbag = tree.multiplicity.iter().filter(|&&c| c > 0).count();
            if inbag == 2 {
                let Node::Internal { exemplars, children, .. } = &tree.nodes[0] else {
                    panic!("root must split");
                };
                assert_eq!(exemplars, &vec![0, 1]);
                assert_eq!(children.len(), 2);
                for &c in children {
                    assert_eq!(tree.leaf(c).stop, StopReason::Pure);
                }
            } else {
                assert!(matches!(tree.nodes[0], Node::Leaf(_)));
            }
        }
        let f = fit(&d, &cfg().with_trees(25)).unwrap();
        assert_eq!(f.predict(&d.instances[0]).unwrap(), Target::Class(0));
        assert_eq!(f.predict(&d.instances[1]).unwrap(), Target::Class(1));
    }

    #[test]
    fn single_class_is_single_leaf() {
        let d = toy(&[(0.0, "a"), (1.0, "a"), (5.0, "a")]);
        let f = fit(&d, &cfg()).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn identical_payloads_mixed_labels_stop_without_progress() {
        let d = toy(&[(1.0, "a"), (1.0, "b"), (1.0, "a"), (1.0, "b")]);
        let f = fit(&d, &cfg()).unwrap();
        for t in &f.trees {
            let (_, leaf) = t.leaves().next().unwrap();
            assert!(t.nodes.len() == 1);
            assert!(matches!(leaf.stop, StopReason::NoProgress | StopReason::Pure));
        }
    }

    #[test]
    fn tie_routes_to_branch_zero() {
        let d = toy(&[(0.0, "a"), (2.0, "b")]);
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    distance: 0,
                    exemplars: vec![0, 1],
                    children: vec![1, 2],
                },
                Node::Leaf(Leaf {
                    members: vec![(0, 1)],
                    weight: 1,
                    class_counts: vec![1, 0],
                    mean: 0.0,
                    depth: 1,
                    stop: StopReason::Pure,
                }),
                Node::Leaf(Leaf {
                    members: vec![(1, 1)],
                    weight: 1,
                    class_counts: vec![0, 1],
                    mean: 0.0,
                    depth: 1,
                    stop: StopReason::Pure,
                }),
            ],
            multiplicity: vec![1, 1],
            oob_leaves: vec![],
            depth: 1,
        };
        let measures = resolve_measures(&cfg(), &d).unwrap();
        let mid = Instance::vector("q", vec![1.0]);
        let r = route_tree(&tree, &measures, &d, &mid, 0).unwrap();
        assert_eq!(r, Route { leaf: 1, rounds: 1, evals: 2 });
        let r = route_tree(&tree, &measures, &d, &d.instances[1], 0).unwrap();
        assert_eq!(r.leaf, 2);
    }

    #[test]
    fn weighted_impurities() {
        let d = Dataset::regression(
            (0..4).map(|i| Instance::vector(format!("{i}"), vec![i as f64])).collect(),
            vec![1.0, 2.0, 3.0, 10.0],
        )
        .unwrap();
        let all = [(0, 1), (1, 1), (2, 1), (3, 1)];
        assert!((impurity(&d, Purity::Variance, &all) - 12.5).abs() < 1e-12);
        // lower median 2: |1-2|+0+1+8 = 10
        assert!((impurity(&d, Purity::Mad, &all) - 2.5).abs() < 1e-12);
        assert_eq!(impurity(&d, Purity::Mad, &[(0, 3), (3, 1)]), 9.0 / 4.0);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let d = toy(&[(0.0, "a"), (0.3, "a"), (1.0, "b"), (1.2, "b"), (2.0, "c"), (2.1, "a")]);
        let c = cfg().with_seed(9);
        let a = fit(&d, &c).unwrap();
        let b = fit(&d, &c).unwrap();
        assert_eq!(a.trees, b.trees);

        let bytes = a.to_bytes().unwrap();
        let back = Forest::from_bytes(&bytes).unwrap();
        assert_eq!(back.trees, a.trees);
        for x in &d.instances {
            assert_eq!(back.predict(x).unwrap(), a.predict(x).unwrap());
        }
        assert!(matches!(
            Forest::from_bytes(&bytes[..bytes.len() - 5]),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().with_r(0).validate().is_err());
        assert!(ForestConfig::classification(vec![]).validate().is_err());
        let mut c = cfg();
        c.purity = Purity::Mad;
        assert!(c.validate().is_err());
    }
}
