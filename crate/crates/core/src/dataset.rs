//! Datasets of vectors, multichannel series and labeled graphs.
//!
//! Every vector or series instance is addressed as a grid of channels by
//! positions. A vector of dimension `p` is one channel with `p` positions; a
//! series with `p` channels has `T_n` positions per channel, where `T_n` may
//! differ between instances. Missing entries are `NaN` in the payload and are
//! recorded in the instance's [`MissingMask`], which keeps remembering them
//! after an imputation has filled the payload back in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::PredictionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Vector,
    Series,
    Graph,
}

impl std::fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PayloadKind::Vector => "vector",
            PayloadKind::Series => "series",
            PayloadKind::Graph => "graph",
        })
    }
}

/// Undirected graph with discrete node labels. Edges are stored once as
/// `(u, v)` with `u < v`, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(nodes: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = nodes.len();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Data(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Graph {
            nodes,
            edges: set.into_iter().collect(),
        })
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Payload {
    Vector(#[serde(with = "nan_serde::flat")] Vec<f64>),
    Series(#[serde(with = "nan_serde::nested")] Vec<Vec<f64>>),
    Graph(Graph),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Vector(_) => PayloadKind::Vector,
            Payload::Series(_) => PayloadKind::Series,
            Payload::Graph(_) => PayloadKind::Graph,
        }
    }

    /// Channel count of the value grid (zero for graphs).
    pub fn n_channels(&self) -> usize {
        match self {
            Payload::Vector(_) => 1,
            Payload::Series(c) => c.len(),
            Payload::Graph(_) => 0,
        }
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        match self {
            Payload::Vector(v) => {
                assert_eq!(j, 0, "vectors have a single channel");
                v
            }
            Payload::Series(c) => &c[j],
            Payload::Graph(_) => &[],
        }
    }

    pub fn channel_mut(&mut self, j: usize) -> &mut [f64] {
        match self {
            Payload::Vector(v) => {
                assert_eq!(j, 0, "vectors have a single channel");
                v
            }
            Payload::Series(c) => &mut c[j],
            Payload::Graph(_) => &mut [],
        }
    }

    pub fn get(&self, j: usize, t: usize) -> Option<f64> {
        self.channel(j).get(t).copied()
    }

    /// Number of value entries in the grid.
    pub fn n_entries(&self) -> usize {
        (0..self.n_channels()).map(|j| self.channel(j).len()).sum()
    }
}

/// Per-channel sorted sets of missing positions (`M_nj`); the complement
/// within the channel length is the observed set `O_nj`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingMask {
    channels: Vec<Vec<usize>>,
}

impl MissingMask {
    pub fn empty(n_channels: usize) -> Self {
        MissingMask {
            channels: vec![Vec::new(); n_channels],
        }
    }

    /// Derives the mask from `NaN` entries of a payload.
    pub fn from_payload(payload: &Payload) -> Self {
        let channels = (0..payload.n_channels())
            .map(|j| {
                payload
                    .channel(j)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.is_nan())
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        MissingMask { channels }
    }

    pub fn missing(&self, j: usize) -> &[usize] {
        self.channels.get(j).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_missing(&self, j: usize, t: usize) -> bool {
        self.missing(j).binary_search(&t).is_ok()
    }

    pub fn is_observed(&self, payload: &Payload, j: usize, t: usize) -> bool {
        t < payload.channel(j).len() && !self.is_missing(j, t)
    }

    pub fn insert(&mut self, j: usize, t: usize) {
        if self.channels.len() <= j {
            self.channels.resize(j + 1, Vec::new());
        }
        if let Err(pos) = self.channels[j].binary_search(&t) {
            self.channels[j].insert(pos, t);
        }
    }

    pub fn n_missing(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_missing() == 0
    }

    /// Checks that missing and observed sets partition every channel range.
    pub fn check_partition(&self, payload: &Payload) -> bool {
        if payload.kind() == PayloadKind::Graph {
            return self.is_empty();
        }
        (0..payload.n_channels()).all(|j| {
            let len = payload.channel(j).len();
            let m = self.missing(j);
            m.windows(2).all(|w| w[0] < w[1]) && m.iter().all(|&t| t < len)
        }) && self.channels.len() <= payload.n_channels().max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub payload: Payload,
    pub mask: MissingMask,
}

impl Instance {
    /// Builds an instance whose mask mirrors the `NaN` entries of the payload.
    pub fn new(id: impl Into<String>, payload: Payload) -> Self {
        let mask = MissingMask::from_payload(&payload);
        Instance {
            id: id.into(),
            payload,
            mask,
        }
    }

    pub fn vector(id: impl Into<String>, values: Vec<f64>) -> Self {
        Instance::new(id, Payload::Vector(values))
    }

    pub fn series(id: impl Into<String>, channels: Vec<Vec<f64>>) -> Self {
        Instance::new(id, Payload::Series(channels))
    }

    pub fn graph(id: impl Into<String>, graph: Graph) -> Self {
        Instance::new(id, Payload::Graph(graph))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Index into the dataset's class alphabet.
    Class(usize),
    Real(f64),
}

impl Target {
    pub fn class(self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(c),
            Target::Real(_) => None,
        }
    }

    pub fn real(self) -> Option<f64> {
        match self {
            Target::Real(v) => Some(v),
            Target::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub targets: Vec<Target>,
    pub task: Task,
    /// Class alphabet; `Target::Class(i)` names `classes[i]`.
    pub classes: Vec<String>,
    /// Per-coordinate categorical flags for vector payloads (empty: all continuous).
    #[serde(default)]
    pub categorical: Vec<bool>,
}

impl Dataset {
    /// Classification dataset; the class alphabet is taken from the labels.
    pub fn classification(instances: Vec<Instance>, labels: &[impl AsRef<str>]) -> Result<Self> {
        let classes = class_alphabet(labels.iter().map(|l| l.as_ref()));
        let targets = labels
            .iter()
            .map(|l| Target::Class(classes.iter().position(|c| c == l.as_ref()).unwrap()))
            .collect();
        let d = Dataset {
            instances,
            targets,
            task: Task::Classification,
            classes,
            categorical: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn regression(instances: Vec<Instance>, values: Vec<f64>) -> Result<Self> {
        let d = Dataset {
            instances,
            targets: values.into_iter().map(Target::Real).collect(),
            task: Task::Regression,
            classes: Vec::new(),
            categorical: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn kind(&self) -> Option<PayloadKind> {
        self.instances.first().map(|i| i.payload.kind())
    }

    pub fn class_labels(&self) -> Vec<usize> {
        self.targets.iter().filter_map(|t| t.class()).collect()
    }

    pub fn real_targets(&self) -> Vec<f64> {
        self.targets.iter().filter_map(|t| t.real()).collect()
    }

    pub fn is_categorical(&self, j: usize, t: usize) -> bool {
        j == 0 && self.categorical.get(t).copied().unwrap_or(false)
    }

    pub fn n_missing(&self) -> usize {
        self.instances.iter().map(|i| i.mask.n_missing()).sum()
    }

    /// Checks structural invariants: homogeneous payloads, consistent
    /// dimensions, finite targets and mask partitions.
    pub fn validate(&self) -> Result<()> {
        if self.instances.len() != self.targets.len() {
            return Err(Error::Data(format!(
                "{} instances but {} targets",
                self.instances.len(),
                self.targets.len()
            )));
        }
        let Some(first) = self.instances.first() else {
            return Ok(());
        };
        let kind = first.payload.kind();
        let width = match &first.payload {
            Payload::Vector(v) => v.len(),
            Payload::Series(c) => c.len(),
            Payload::Graph(_) => 0,
        };
        for inst in &self.instances {
            if inst.payload.kind() != kind {
                return Err(Error::PayloadKind(format!(
                    "instance `{}` is a {} but the dataset holds {kind}s",
                    inst.id,
                    inst.payload.kind()
                )));
            }
            match &inst.payload {
                Payload::Vector(v) if v.len() != width => {
                    return Err(Error::Data(format!(
                        "instance `{}` has dimension {} instead of {width}",
                        inst.id,
                        v.len()
                    )))
                }
                Payload::Series(c) => {
                    if c.len() != width {
                        return Err(Error::Data(format!(
                            "instance `{}` has {} channels instead of {width}",
                            inst.id,
                            c.len()
                        )));
                    }
                    if c.iter().any(|ch| ch.len() != c[0].len()) {
                        return Err(Error::Data(format!(
                            "instance `{}` has channels of unequal length",
                            inst.id
                        )));
                    }
                }
                Payload::Graph(g) => {
                    if g.edges.iter().any(|&(u, v)| u >= g.nodes.len() || v >= g.nodes.len()) {
                        return Err(Error::Data(format!(
                            "graph `{}` has an edge outside its node range",
                            inst.id
                        )));
                    }
                }
                _ => {}
            }
            if !inst.mask.check_partition(&inst.payload) {
                return Err(Error::Data(format!(
                    "instance `{}` has an invalid missing mask",
                    inst.id
                )));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            match (self.task, t) {
                (Task::Classification, Target::Class(c)) if *c < self.classes.len() => {}
                (Task::Regression, Target::Real(v)) if v.is_finite() => {}
                _ => {
                    return Err(Error::Data(format!(
                        "target of instance `{}` is invalid for a {:?} task",
                        self.instances[i].id, self.task
                    )))
                }
            }
        }
        Ok(())
    }

    /// New dataset holding the given instances (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            task: self.task,
            classes: self.classes.clone(),
            categorical: self.categorical.clone(),
        }
    }

    /// Re-expresses class targets against `alphabet`, which must contain
    /// every class of this dataset.
    pub fn reindex_classes(&mut self, alphabet: &[String]) -> Result<()> {
        if self.task != Task::Classification {
            return Ok(());
        }
        let map: Vec<usize> = self
            .classes
            .iter()
            .map(|c| {
                alphabet
                    .iter()
                    .position(|a| a == c)
                    .ok_or_else(|| Error::Data(format!("class `{c}` is not in the target alphabet")))
            })
            .collect::<Result<_>>()?;
        for t in &mut self.targets {
            if let Target::Class(c) = t {
                *c = map[*c];
            }
        }
        self.classes = alphabet.to_vec();
        Ok(())
    }

    /// Standardizes every continuous vector coordinate to zero mean and unit
    /// variance, using observed values only.
    pub fn standardize(&mut self) {
        let Some(Payload::Vector(first)) = self.instances.first().map(|i| &i.payload) else {
            return;
        };
        let p = first.len();
        for t in 0..p {
            if self.is_categorical(0, t) {
                continue;
            }
            let vals: Vec<f64> = self
                .instances
                .iter()
                .filter_map(|i| i.payload.get(0, t))
                .filter(|v| !v.is_nan())
                .collect();
            if vals.len() < 2 {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for inst in &mut self.instances {
                let v = &mut inst.payload.channel_mut(0)[t];
                *v = (*v - mean) / sd;
            }
        }
    }
}

/// Merges the class alphabets of two datasets so both index the same labels.
pub fn harmonize_classes(a: &mut Dataset, b: &mut Dataset) -> Result<()> {
    let alphabet = class_alphabet(a.classes.iter().chain(&b.classes).map(String::as_str));
    a.reindex_classes(&alphabet)?;
    b.reindex_classes(&alphabet)
}

/// Sorted unique labels; numerically when every label parses as a number.
fn class_alphabet<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let unique: BTreeSet<&str> = labels.collect();
    let mut classes: Vec<String> = unique.into_iter().map(str::to_owned).collect();
    if classes.iter().all(|c| c.parse::<f64>().is_ok()) {
        classes.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
                .then_with(|| a.cmp(b))
        });
    }
    classes
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label_column: String,
    /// Parse the label column as a real-valued regression target.
    pub regression: bool,
    /// Column holding instance ids; row numbers are used when absent.
    pub id_column: Option<String>,
    /// Feature columns whose values are category names rather than numbers.
    pub categorical_columns: Vec<String>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label_column.into(),
            ..Default::default()
        }
    }
}

/// Loads a CSV table of vectors. Empty cells denote missing values.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    load_csv_with(path, &CsvOptions::new(label_column))
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == opts.label_column)
        .ok_or_else(|| Error::format(path, 1, format!("no label column `{}`", opts.label_column)))?;
    let id_idx = match &opts.id_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::format(path, 1, format!("no id column `{name}`")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_idx && Some(c) != id_idx)
        .collect();
    let categorical: Vec<bool> = feature_cols
        .iter()
        .map(|&c| opts.categorical_columns.iter().any(|n| n == &headers[c]))
        .collect();

    let mut rows: Vec<(String, Vec<Option<String>>, String)> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = r + 2;
        let id = id_idx.map(|c| rec[c].to_owned()).unwrap_or_else(|| r.to_string());
        let cells = feature_cols
            .iter()
            .map(|&c| {
                let s = rec[c].trim();
                (!s.is_empty()).then(|| s.to_owned())
            })
            .collect::<Vec<_>>();
        if !cells.is_empty() && cells.iter().all(Option::is_none) {
            return Err(Error::format(
                path,
                line,
                format!("instance `{id}` has no observed feature"),
            ));
        }
        let label = rec[label_idx].trim().to_owned();
        if label.is_empty() {
            return Err(Error::format(path, line, format!("instance `{id}` has no label")));
        }
        rows.push((id, cells, label));
    }

    // category codes follow the sorted order of the category names
    let codes: Vec<BTreeMap<String, f64>> = categorical
        .iter()
        .enumerate()
        .map(|(k, &is_cat)| {
            if !is_cat {
                return BTreeMap::new();
            }
            let names: BTreeSet<&String> = rows.iter().filter_map(|r| r.1[k].as_ref()).collect();
            names
                .into_iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i as f64))
                .collect()
        })
        .collect();

    let mut instances = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (id, cells, label)) in rows.into_iter().enumerate() {
        let mut values = Vec::with_capacity(cells.len());
        for (k, cell) in cells.into_iter().enumerate() {
            let v = match cell {
                None => f64::NAN,
                Some(s) if categorical[k] => codes[k][&s],
                Some(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::format(path, r + 2, format!("`{s}` in column `{}` is not a number", &headers[feature_cols[k]]))
                })?,
            };
            values.push(v);
        }
        instances.push(Instance::vector(id, values));
        labels.push(label);
    }

    let mut d = if opts.regression {
        let values = labels
            .iter()
            .enumerate()
            .map(|(r, l)| {
                l.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(path, r + 2, format!("target `{l}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::regression(instances, values)?
    } else {
        Dataset::classification(instances, &labels)?
    };
    if categorical.iter().any(|&c| c) {
        d.categorical = categorical;
    }
    Ok(d)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::format(
            path,
            line,
            format!("ragged row: {len} fields where {expected_len} were expected"),
        ),
        other => Error::format(path, line, format!("{other:?}")),
    }
}

#[derive(Deserialize)]
struct SeriesRecord {
    id: serde_json::Value,
    label: serde_json::Value,
    channels: Vec<Vec<Option<f64>>>,
}

#[derive(Deserialize)]
struct GraphRecord {
    id: serde_json::Value,
    label: serde_json::Value,
    nodes: Vec<serde_json::Value>,
    #[serde(default)]
    edges: Vec<(usize, usize)>,
}

fn json_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn build_targets(
    path: &Path,
    instances: Vec<Instance>,
    labels: Vec<(usize, serde_json::Value)>,
    task: Task,
) -> Result<Dataset> {
    match task {
        Task::Classification => {
            let labels: Vec<String> = labels.iter().map(|(_, l)| json_text(l)).collect();
            Dataset::classification(instances, &labels)
        }
        Task::Regression => {
            let values = labels
                .iter()
                .map(|(line, l)| {
                    let v = match l {
                        serde_json::Value::Number(n) => n.as_f64(),
                        serde_json::Value::String(s) => s.parse().ok(),
                        _ => None,
                    };
                    v.filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| Error::format(path, *line, format!("target {l} is not a finite number")))
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::regression(instances, values)
        }
    }
}

/// Loads line-delimited series records `{id, label, channels}`; `null`
/// entries are missing values.
pub fn load_series_jsonl(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for (line, text) in read_lines(path)? {
        let rec: SeriesRecord =
            serde_json::from_str(&text).map_err(|e| Error::format(path, line, e.to_string()))?;
        let id = json_text(&rec.id);
        if rec.channels.is_empty() || rec.channels[0].is_empty() {
            return Err(Error::format(path, line, format!("series `{id}` is empty")));
        }
        if rec.channels.iter().any(|c| c.len() != rec.channels[0].len()) {
            return Err(Error::format(
                path,
                line,
                format!("series `{id}` has channels of unequal length"),
            ));
        }
        let channels: Vec<Vec<f64>> = rec
            .channels
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            .collect();
        if channels.iter().flatten().all(|v| v.is_nan()) {
            return Err(Error::format(path, line, format!("series `{id}` has no observed value")));
        }
        instances.push(Instance::series(id, channels));
        labels.push((line, rec.label));
    }
    check_channel_count(path, &instances)?;
    build_targets(path, instances, labels, task)
}

fn check_channel_count(path: &Path, instances: &[Instance]) -> Result<()> {
    if let Some(first) = instances.first() {
        let p = first.payload.n_channels();
        if let Some((k, bad)) = instances
            .iter()
            .enumerate()
            .find(|(_, i)| i.payload.n_channels() != p)
        {
            return Err(Error::format(
                path,
                k + 1,
                format!("series `{}` has {} channels, expected {p}", bad.id, bad.payload.n_channels()),
            ));
        }
    }
    Ok(())
}

/// Loads line-delimited graph records `{id, label, nodes, edges}`.
pub fn load_graph_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    load_graph_jsonl_with_task(path, Task::Classification)
}

pub fn load_graph_jsonl_with_task(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for (line, text) in read_lines(path)? {
        let rec: GraphRecord =
            serde_json::from_str(&text).map_err(|e| Error::format(path, line, e.to_string()))?;
        let id = json_text(&rec.id);
        let nodes: Vec<String> = rec.nodes.iter().map(json_text).collect();
        let graph = Graph::new(nodes, rec.edges)
            .map_err(|e| Error::format(path, line, format!("graph `{id}`: {e}")))?;
        instances.push(Instance::graph(id, graph));
        labels.push((line, rec.label));
    }
    build_targets(path, instances, labels, task)
}

/// Loads a predictions CSV: `id,label` rows, or `id,p_1,..,p_m` probability rows.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionTable> {
    PredictionTable::load_csv(path)
}

/// Masks exactly `floor(fraction * entries)` entries uniformly at random,
/// never leaving an instance without an observed entry.
pub fn inject_mcar(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("MCAR fraction {fraction} is outside [0, 1)")));
    }
    if d.kind() == Some(PayloadKind::Graph) {
        return Err(Error::PayloadKind("graphs cannot carry missing values".into()));
    }
    let total: usize = d.instances.iter().map(|i| i.payload.n_entries()).sum();
    let target = (fraction * total as f64).floor() as usize;
    let mut out = d.clone();
    if target == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed_left: Vec<usize> = d
        .instances
        .iter()
        .map(|i| i.payload.n_entries() - i.mask.n_missing())
        .collect();
    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    for (n, inst) in d.instances.iter().enumerate() {
        for j in 0..inst.payload.n_channels() {
            for t in 0..inst.payload.channel(j).len() {
                if !inst.mask.is_missing(j, t) {
                    cells.push((n, j, t));
                }
            }
        }
    }
    cells.shuffle(&mut rng);
    let mut masked = 0;
    for (n, j, t) in cells {
        if masked == target {
            break;
        }
        // keep one observed entry per instance
        if observed_left[n] <= 1 {
            continue;
        }
        observed_left[n] -= 1;
        let inst = &mut out.instances[n];
        inst.payload.channel_mut(j)[t] = f64::NAN;
        inst.mask.insert(j, t);
        masked += 1;
    }
    if masked < target {
        return Err(Error::Data(format!(
            "cannot mask {target} entries while keeping one observed entry per instance (masked {masked})"
        )));
    }
    Ok(out)
}

/// Splits into (train, test) with `floor(test_fraction * N)` test instances.
pub fn train_test_split(
    d: &Dataset,
    test_fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(d, test_fraction, stratify, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}

/// Index form of [`train_test_split`]; both index lists are sorted.
pub fn split_indices(
    d: &Dataset,
    test_fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} is outside (0, 1)"
        )));
    }
    let n = d.len();
    let n_test = (test_fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::with_capacity(n_test);
    if stratify && d.task == Task::Classification {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
        for (i, t) in d.targets.iter().enumerate() {
            groups[t.class().unwrap()].push(i);
        }
        let mut quota: Vec<usize> = Vec::with_capacity(groups.len());
        let mut remainders: Vec<(f64, usize)> = Vec::new();
        for (c, g) in groups.iter().enumerate() {
            if g.len() == 1 {
                log::warn!("class `{}` has a single instance; it stays in the training split", d.classes[c]);
                quota.push(0);
                continue;
            }
            let exact = test_fraction * g.len() as f64;
            quota.push(exact.floor() as usize);
            if g.len() > 1 {
                remainders.push((exact - exact.floor(), c));
            }
        }
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut missing = n_test.saturating_sub(quota.iter().sum());
        for &(_, c) in &remainders {
            if missing == 0 {
                break;
            }
            if quota[c] + 1 < groups[c].len() {
                quota[c] += 1;
                missing -= 1;
            }
        }
        for (g, q) in groups.iter_mut().zip(&quota) {
            g.shuffle(&mut rng);
            test.extend_from_slice(&g[..*q]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..n_test]);
    }
    test.sort_unstable();
    let in_test: BTreeSet<usize> = test.iter().copied().collect();
    let train = (0..n).filter(|i| !in_test.contains(i)).collect();
    Ok((train, test))
}

fn target_text(d: &Dataset, t: Target) -> String {
    match t {
        Target::Class(c) => d.classes[c].clone(),
        Target::Real(v) => v.to_string(),
    }
}

/// Rewrites the CSV `original` with the feature cells of `d`, which must
/// have been loaded from it with `opts`. Column order, ids and labels are
/// kept; categorical codes are written back as category names.
pub fn write_csv_like(d: &Dataset, original: impl AsRef<Path>, opts: &CsvOptions, out: impl AsRef<Path>) -> Result<()> {
    let (original, out) = (original.as_ref(), out.as_ref());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(original)
        .map_err(|e| csv_error(original, e))?;
    let headers = reader.headers().map_err(|e| csv_error(original, e))?.clone();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(original, e))?;
    if records.len() != d.len() {
        return Err(Error::Data(format!(
            "{} has {} rows but the dataset has {}",
            original.display(),
            records.len(),
            d.len()
        )));
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| headers[c] != opts.label_column && Some(&headers[c]) != opts.id_column.as_deref())
        .collect();
    let names: Vec<Vec<String>> = feature_cols
        .iter()
        .map(|&c| {
            if !opts.categorical_columns.iter().any(|n| n == &headers[c]) {
                return Vec::new();
            }
            let set: BTreeSet<&str> = records.iter().map(|r| r[c].trim()).filter(|s| !s.is_empty()).collect();
            set.into_iter().map(str::to_owned).collect()
        })
        .collect();
    let mut writer = csv::Writer::from_path(out).map_err(|e| csv_error(out, e))?;
    writer.write_record(&headers).map_err(|e| csv_error(out, e))?;
    for (rec, inst) in records.iter().zip(&d.instances) {
        let mut row: Vec<String> = rec.iter().map(str::to_owned).collect();
        for (k, &c) in feature_cols.iter().enumerate() {
            let v = inst.payload.channel(0)[k];
            row[c] = if v.is_nan() {
                String::new()
            } else if !names[k].is_empty() {
                names[k].get(v.round() as usize).cloned().unwrap_or_else(|| v.to_string())
            } else {
                v.to_string()
            };
        }
        writer.write_record(&row).map_err(|e| csv_error(out, e))?;
    }
    writer.flush().map_err(|e| Error::io(out, e))
}

/// Writes series records `{id, label, channels}`, one per line; `NaN` is `null`.
pub fn write_series_jsonl(d: &Dataset, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    let mut text = String::new();
    for (inst, &t) in d.instances.iter().zip(&d.targets) {
        let channels: Vec<Vec<Option<f64>>> = (0..inst.payload.n_channels())
            .map(|j| inst.payload.channel(j).iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
            .collect();
        let label = match t {
            Target::Class(_) => serde_json::Value::String(target_text(d, t)),
            Target::Real(v) => serde_json::json!(v),
        };
        let rec = serde_json::json!({ "id": inst.id, "label": label, "channels": channels });
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| Error::io(out, e))
}

/// On-disk dataset formats, chosen by file extension and first record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Series,
    Graph,
}

impl DataFormat {
    pub fn detect(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(DataFormat::Csv),
            Some("jsonl") | Some("json") => {
                let lines = read_lines(path)?;
                let (line, first) = lines
                    .first()
                    .ok_or_else(|| Error::format(path, 1, "file holds no records"))?;
                let v: serde_json::Value =
                    serde_json::from_str(first).map_err(|e| Error::format(path, *line, e.to_string()))?;
                if v.get("nodes").is_some() {
                    Ok(DataFormat::Graph)
                } else {
                    Ok(DataFormat::Series)
                }
            }
            _ => Err(Error::Config(format!(
                "cannot tell the format of {}; use a .csv or .jsonl file",
                path.display()
            ))),
        }
    }
}

/// Loads any supported format. CSV files need `csv.label_column`; for
/// JSONL files only `csv.regression` is read.
pub fn load_any(path: impl AsRef<Path>, csv: &CsvOptions) -> Result<(Dataset, DataFormat)> {
    let path = path.as_ref();
    let format = DataFormat::detect(path)?;
    let task = if csv.regression {
        Task::Regression
    } else {
        Task::Classification
    };
    let d = match format {
        DataFormat::Csv => {
            if csv.label_column.is_empty() {
                return Err(Error::Config("CSV input needs a label column".into()));
            }
            load_csv_with(path, csv)?
        }
        DataFormat::Series => load_series_jsonl(path, task)?,
        DataFormat::Graph => load_graph_jsonl_with_task(path, task)?,
    };
    Ok((d, format))
}

/// Serde helpers writing `NaN` as `null`.
mod nan_serde {
    pub mod flat {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|x| (!x.is_nan()).then_some(*x))
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v: Vec<Option<f64>> = Vec::deserialize(d)?;
            Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        }
    }

    pub mod nested {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|c| c.iter().map(|x| (!x.is_nan()).then_some(*x)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let v: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
            Ok(v.into_iter()
                .map(|c| c.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect())
        }
    }
}
