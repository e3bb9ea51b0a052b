//! Distance measures and the registry that resolves them by name.
//!
//! Every measure is symmetric, nonnegative and zero on identical payloads.
//! The triangle inequality is not assumed anywhere in the crate; DTW with
//! squared per-cell costs, the cosine distance and the model-informed
//! distances all violate it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::dataset::{Graph, Instance, Payload, PayloadKind};
use crate::error::{Error, Result};
use crate::meta::{MetaClassDistance, MetaProbDistance, PredictionTable};

/// A distance between two instances of the same payload kind.
pub trait DistanceMeasure: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn accepts(&self, kind: PayloadKind) -> bool;

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64>;
}

/// Named, parameterized distance selection.
///
/// The textual form is `name[:key=value[,key=value...]]`, e.g. `dtw_d:w=3`
/// or `wl:h=2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    /// Predictions backing a model-informed distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Arc<PredictionTable>>,
}

impl DistanceSpec {
    pub fn new(name: impl Into<String>) -> Self {
        DistanceSpec {
            name: name.into(),
            params: BTreeMap::new(),
            table: None,
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn with_table(mut self, table: Arc<PredictionTable>) -> Self {
        self.table = Some(table);
        self
    }

    pub fn euclidean() -> Self {
        DistanceSpec::new("euclidean")
    }

    pub fn dtw_dependent(window: Option<usize>) -> Self {
        let spec = DistanceSpec::new("dtw_d");
        match window {
            Some(w) => spec.with_param("w", w),
            None => spec,
        }
    }

    pub fn dtw_independent(window: Option<usize>) -> Self {
        let spec = DistanceSpec::new("dtw_i");
        match window {
            Some(w) => spec.with_param("w", w),
            None => spec,
        }
    }

    pub fn wl(depth: usize) -> Self {
        DistanceSpec::new("wl").with_param("h", depth)
    }

    fn param_str(&self, key: &str) -> Option<String> {
        self.params.get(key).map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    fn param_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.params.get(key) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => {
                let parsed = match v {
                    serde_json::Value::Number(n) => n.as_u64(),
                    serde_json::Value::String(s) if s == "unbounded" || s == "inf" => return Ok(None),
                    serde_json::Value::String(s) => s.parse::<u64>().ok(),
                    _ => None,
                };
                parsed.map(|u| Some(u as usize)).ok_or_else(|| {
                    Error::distance(&self.name, format!("parameter `{key}` must be a nonnegative integer, got {v}"))
                })
            }
        }
    }

    fn param_bool(&self, key: &str) -> Result<bool> {
        match self.params.get(key) {
            None => Ok(false),
            Some(serde_json::Value::Bool(b)) => Ok(*b),
            Some(serde_json::Value::String(s)) if s == "true" => Ok(true),
            Some(serde_json::Value::String(s)) if s == "false" => Ok(false),
            Some(v) => Err(Error::distance(&self.name, format!("parameter `{key}` must be a boolean, got {v}"))),
        }
    }
}

impl fmt::Display for DistanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            write!(f, "{}{k}={v}", if i == 0 { ':' } else { ',' })?;
        }
        Ok(())
    }
}

impl FromStr for DistanceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Config(format!("empty distance name in `{s}`")));
        }
        let mut spec = DistanceSpec::new(name);
        for kv in rest.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in `{kv}`")))?;
            let v = v.trim();
            let value = if let Ok(i) = v.parse::<i64>() {
                serde_json::Value::from(i)
            } else if let Ok(b) = v.parse::<bool>() {
                serde_json::Value::from(b)
            } else {
                serde_json::Value::from(v)
            };
            spec.params.insert(k.trim().to_owned(), value);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Sum only over coordinates observed in both instances.
    #[default]
    Skip,
    Error,
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(MissingPolicy::Skip),
            "error" => Ok(MissingPolicy::Error),
            other => Err(Error::Config(format!("unknown missing policy `{other}`"))),
        }
    }
}

/// Euclidean distance over mutually observed coordinates.
///
/// With [`MissingPolicy::Skip`], pairs without a single mutually observed
/// coordinate are at `f64::INFINITY`, ordered after every finite distance.
/// `rescale` multiplies the partial sum by `p / observed` before the root.
pub fn euclidean(x: &[f64], y: &[f64], policy: MissingPolicy, rescale: bool) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::distance(
            "euclidean",
            format!("dimension mismatch ({} vs {})", x.len(), y.len()),
        ));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (a, b) in x.iter().zip(y) {
        if a.is_nan() || b.is_nan() {
            if policy == MissingPolicy::Error {
                return Err(Error::distance("euclidean", "missing coordinate under policy=error"));
            }
            continue;
        }
        sum += (a - b) * (a - b);
        used += 1;
    }
    if used == 0 && !x.is_empty() {
        return Ok(f64::INFINITY);
    }
    if rescale && used > 0 {
        sum *= x.len() as f64 / used as f64;
    }
    Ok(sum.sqrt())
}

/// `1 - <x,y> / (|x| |y|)`, clamped to `[0, 2]`.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::distance(
            "cosine",
            format!("dimension mismatch ({} vs {})", x.len(), y.len()),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::distance("cosine", "missing values must be imputed first"));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::distance("cosine", "zero-norm input"));
    }
    // identical directions give exactly zero regardless of rounding
    if x == y {
        return Ok(0.0);
    }
    Ok((1.0 - dot / (nx * ny)).clamp(0.0, 2.0))
}

/// Accumulated DTW cost over an `nx` by `ny` grid with a Sakoe-Chiba band.
///
/// The band half-width is widened to `|nx - ny|` so that a warping path always
/// exists for unequal lengths.
fn dtw_grid(nx: usize, ny: usize, window: Option<usize>, cost: impl Fn(usize, usize) -> f64) -> f64 {
    let w = window.unwrap_or(usize::MAX).max(nx.abs_diff(ny));
    let mut prev = vec![f64::INFINITY; ny];
    let mut curr = vec![f64::INFINITY; ny];
    for i in 0..nx {
        let lo = i.saturating_sub(w);
        let hi = i.saturating_add(w).min(ny - 1);
        curr.fill(f64::INFINITY);
        for j in lo..=hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 {
                    m = m.min(prev[j]);
                    if j > 0 {
                        m = m.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    m = m.min(curr[j - 1]);
                }
                m
            };
            curr[j] = cost(i, j) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[ny - 1]
}

fn check_series(name: &str, x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::distance(name, format!("channel count mismatch ({} vs {})", x.len(), y.len())));
    }
    if x.is_empty() || x[0].is_empty() || y[0].is_empty() {
        return Err(Error::distance(name, "empty series"));
    }
    if x.iter().chain(y).flatten().any(|v| v.is_nan()) {
        return Err(Error::distance(name, "missing values must be imputed first"));
    }
    Ok(())
}

/// Multichannel DTW aligning all channels jointly; cell cost is the squared
/// Euclidean distance across channels. No final square root is taken.
pub fn dtw_dependent(x: &[Vec<f64>], y: &[Vec<f64>], window: Option<usize>) -> Result<f64> {
    check_series("dtw_d", x, y)?;
    let (nx, ny) = (x[0].len(), y[0].len());
    if x.len() == 1 {
        let (a, b) = (&x[0], &y[0]);
        return Ok(dtw_grid(nx, ny, window, |i, j| (a[i] - b[j]) * (a[i] - b[j])));
    }
    // time-major copies keep the per-cell channel loop contiguous
    let p = x.len();
    let xt: Vec<f64> = (0..nx).flat_map(|i| x.iter().map(move |c| c[i])).collect();
    let yt: Vec<f64> = (0..ny).flat_map(|j| y.iter().map(move |c| c[j])).collect();
    Ok(dtw_grid(nx, ny, window, |i, j| {
        xt[i * p..(i + 1) * p]
            .iter()
            .zip(&yt[j * p..(j + 1) * p])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

/// Sum over channels of univariate DTW.
pub fn dtw_independent(x: &[Vec<f64>], y: &[Vec<f64>], window: Option<usize>) -> Result<f64> {
    check_series("dtw_i", x, y)?;
    let (nx, ny) = (x[0].len(), y[0].len());
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| dtw_grid(nx, ny, window, |i, j| (a[i] - b[j]) * (a[i] - b[j])))
        .sum())
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Label multisets of the `depth + 1` Weisfeiler-Lehman rounds, each sorted.
pub fn wl_label_rounds(g: &Graph, depth: usize) -> Vec<Vec<u64>> {
    let adj = g.adjacency();
    let mut labels: Vec<u64> = g.nodes.iter().map(|l| fnv1a(l.bytes())).collect();
    let mut rounds = Vec::with_capacity(depth + 1);
    let mut sorted = labels.clone();
    sorted.sort_unstable();
    rounds.push(sorted);
    for _ in 0..depth {
        let next: Vec<u64> = adj
            .iter()
            .enumerate()
            .map(|(v, nbrs)| {
                let mut ms: Vec<u64> = nbrs.iter().map(|&u| labels[u]).collect();
                ms.sort_unstable();
                fnv1a(
                    std::iter::once(labels[v])
                        .chain(ms)
                        .flat_map(u64::to_le_bytes),
                )
            })
            .collect();
        labels = next;
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        rounds.push(sorted);
    }
    rounds
}

/// L1 distance between two sorted label multisets.
fn multiset_l1(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut d) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                d += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                d += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    d + (a.len() - i) + (b.len() - j)
}

/// Weisfeiler-Lehman histogram distance: L1 between the per-round label
/// histograms, summed over rounds `0..=depth` and divided by
/// `(V1 + V2) * (depth + 1)`, which keeps the value in `[0, 1]`.
pub fn wl_distance(g1: &Graph, g2: &Graph, depth: usize) -> f64 {
    let total = g1.nodes.len() + g2.nodes.len();
    if total == 0 {
        return 0.0;
    }
    let r1 = wl_label_rounds(g1, depth);
    let r2 = wl_label_rounds(g2, depth);
    let l1: usize = r1.iter().zip(&r2).map(|(a, b)| multiset_l1(a, b)).sum();
    l1 as f64 / (total * (depth + 1)) as f64
}

/// Flattened values of a vector payload or an equal-shaped series.
fn flat_values<'a>(name: &str, a: &'a Payload, b: &'a Payload) -> Result<(Vec<f64>, Vec<f64>)> {
    match (a, b) {
        (Payload::Vector(x), Payload::Vector(y)) => Ok((x.clone(), y.clone())),
        (Payload::Series(x), Payload::Series(y)) => {
            if x.len() != y.len() || x.iter().zip(y).any(|(u, v)| u.len() != v.len()) {
                return Err(Error::distance(name, "series shapes differ; use a DTW distance"));
            }
            Ok((x.concat(), y.concat()))
        }
        _ => Err(Error::distance(
            name,
            format!("unsupported payload pair ({}, {})", a.kind(), b.kind()),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct Euclidean {
    pub policy: MissingPolicy,
    pub rescale: bool,
}

impl DistanceMeasure for Euclidean {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn accepts(&self, kind: PayloadKind) -> bool {
        kind != PayloadKind::Graph
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        if let (Payload::Vector(x), Payload::Vector(y)) = (&a.payload, &b.payload) {
            return euclidean(x, y, self.policy, self.rescale);
        }
        let (x, y) = flat_values("euclidean", &a.payload, &b.payload)?;
        euclidean(&x, &y, self.policy, self.rescale)
    }
}

#[derive(Debug, Clone)]
pub struct Cosine;

impl DistanceMeasure for Cosine {
    fn name(&self) -> &str {
        "cosine"
    }

    fn accepts(&self, kind: PayloadKind) -> bool {
        kind != PayloadKind::Graph
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        if let (Payload::Vector(x), Payload::Vector(y)) = (&a.payload, &b.payload) {
            return cosine(x, y);
        }
        let (x, y) = flat_values("cosine", &a.payload, &b.payload)?;
        cosine(&x, &y)
    }
}

#[derive(Debug, Clone)]
pub struct Dtw {
    pub window: Option<usize>,
    pub dependent: bool,
}

impl Dtw {
    fn as_series<'a>(&self, p: &'a Payload) -> Result<std::borrow::Cow<'a, [Vec<f64>]>> {
        match p {
            Payload::Series(c) => Ok(std::borrow::Cow::Borrowed(c.as_slice())),
            Payload::Vector(v) => Ok(std::borrow::Cow::Owned(vec![v.clone()])),
            Payload::Graph(_) => Err(Error::distance(self.name(), "graphs are not series")),
        }
    }
}

impl DistanceMeasure for Dtw {
    fn name(&self) -> &str {
        if self.dependent {
            "dtw_d"
        } else {
            "dtw_i"
        }
    }

    fn accepts(&self, kind: PayloadKind) -> bool {
        kind != PayloadKind::Graph
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        let (x, y) = (self.as_series(&a.payload)?, self.as_series(&b.payload)?);
        if self.dependent {
            dtw_dependent(&x, &y, self.window)
        } else {
            dtw_independent(&x, &y, self.window)
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeisfeilerLehman {
    pub depth: usize,
}

impl DistanceMeasure for WeisfeilerLehman {
    fn name(&self) -> &str {
        "wl"
    }

    fn accepts(&self, kind: PayloadKind) -> bool {
        kind == PayloadKind::Graph
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        match (&a.payload, &b.payload) {
            (Payload::Graph(g1), Payload::Graph(g2)) => Ok(wl_distance(g1, g2, self.depth)),
            _ => Err(Error::distance("wl", "both payloads must be graphs")),
        }
    }
}

pub type Builder = Arc<dyn Fn(&DistanceSpec) -> Result<Arc<dyn DistanceMeasure>> + Send + Sync>;

/// A distance made available under a name: the payload kinds it accepts,
/// the parameter keys it understands and a constructor.
#[derive(Clone)]
pub struct Plugin {
    pub name: String,
    pub kinds: Vec<PayloadKind>,
    pub params: Vec<String>,
    pub build: Builder,
}

impl Plugin {
    pub fn new<F>(name: impl Into<String>, kinds: &[PayloadKind], params: &[&str], build: F) -> Self
    where
        F: Fn(&DistanceSpec) -> Result<Arc<dyn DistanceMeasure>> + Send + Sync + 'static,
    {
        Plugin {
            name: name.into(),
            kinds: kinds.to_vec(),
            params: params.iter().map(|s| (*s).to_owned()).collect(),
            build: Arc::new(build),
        }
    }
}

impl fmt::Debug for Plugin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plugin")
            .field("name", &self.name)
            .field("kinds", &self.kinds)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    plugins: BTreeMap<String, Plugin>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    pub fn with_builtins() -> Self {
        use PayloadKind::*;
        let mut r = Registry::empty();
        let builtins = [
            Plugin::new("euclidean", &[Vector, Series], &["missing_policy", "rescale"], |s| {
                let policy = s
                    .param_str("missing_policy")
                    .map(|p| p.parse())
                    .transpose()?
                    .unwrap_or_default();
                Ok(Arc::new(Euclidean {
                    policy,
                    rescale: s.param_bool("rescale")?,
                }))
            }),
            Plugin::new("cosine", &[Vector, Series], &[], |_| Ok(Arc::new(Cosine))),
            Plugin::new("dtw_d", &[Series, Vector], &["w"], |s| {
                Ok(Arc::new(Dtw {
                    window: s.param_usize("w")?,
                    dependent: true,
                }))
            }),
            Plugin::new("dtw_i", &[Series, Vector], &["w"], |s| {
                Ok(Arc::new(Dtw {
                    window: s.param_usize("w")?,
                    dependent: false,
                }))
            }),
            Plugin::new("wl", &[Graph], &["h"], |s| {
                if let Some(serde_json::Value::Number(n)) = s.params.get("h") {
                    if n.as_i64().is_some_and(|h| h < 0) {
                        return Err(Error::distance("wl", "depth h must be >= 0"));
                    }
                }
                Ok(Arc::new(WeisfeilerLehman {
                    depth: s.param_usize("h")?.unwrap_or(3),
                }))
            }),
            Plugin::new("meta_class", &[Vector, Series, Graph], &[], |s| {
                let table = s
                    .table
                    .clone()
                    .ok_or_else(|| Error::distance("meta_class", "no prediction table attached"))?;
                table.label_check()?;
                Ok(Arc::new(MetaClassDistance { table }))
            }),
            Plugin::new("meta_prob", &[Vector, Series, Graph], &[], |s| {
                let table = s
                    .table
                    .clone()
                    .ok_or_else(|| Error::distance("meta_prob", "no prediction table attached"))?;
                if table.width() < 2 {
                    return Err(Error::distance("meta_prob", "need a probability table with m >= 2"));
                }
                Ok(Arc::new(MetaProbDistance { table }))
            }),
        ];
        for p in builtins {
            r.plugins.insert(p.name.clone(), p);
        }
        r.plugins.insert(
            "dtw".into(),
            Plugin {
                name: "dtw".into(),
                ..r.plugins["dtw_d"].clone()
            },
        );
        r
    }

    pub fn register(&mut self, plugin: Plugin) -> Result<()> {
        if self.plugins.contains_key(&plugin.name) {
            return Err(Error::Config(format!("distance `{}` is already registered", plugin.name)));
        }
        self.plugins.insert(plugin.name.clone(), plugin);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.plugins.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Plugin> {
        self.plugins.get(name)
    }

    pub fn resolve(&self, spec: &DistanceSpec) -> Result<Arc<dyn DistanceMeasure>> {
        let plugin = self.plugins.get(&spec.name).ok_or_else(|| Error::UnknownDistance {
            name: spec.name.clone(),
            known: self.names().join(", "),
        })?;
        if let Some(bad) = spec.params.keys().find(|k| !plugin.params.contains(k)) {
            return Err(Error::Config(format!(
                "distance `{}`: unknown parameter `{bad}` (valid: {})",
                spec.name,
                plugin.params.join(", ")
            )));
        }
        // a spec the builder rejects is a usage error, not a failed evaluation
        (plugin.build)(spec).map_err(|e| match e {
            Error::Distance { name, message } => Error::Config(format!("distance `{name}`: {message}")),
            other => other,
        })
    }
}

fn global() -> &'static RwLock<Registry> {
    static REGISTRY: OnceLock<RwLock<Registry>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(Registry::with_builtins()))
}

/// Registers a distance in the process-wide registry used by [`resolve`].
pub fn register(plugin: Plugin) -> Result<()> {
    global().write().expect("registry lock poisoned").register(plugin)
}

/// Resolves a spec against the process-wide registry.
pub fn resolve(spec: &DistanceSpec) -> Result<Arc<dyn DistanceMeasure>> {
    global().read().expect("registry lock poisoned").resolve(spec)
}

pub fn registered_names() -> Vec<String> {
    global().read().expect("registry lock poisoned").names()
}

impl PredictionTable {
    fn label_check(&self) -> Result<()> {
        match self {
            PredictionTable::Labels(_) => Ok(()),
            PredictionTable::Probabilities(_) => Err(Error::distance(
                "meta_class",
                "needs a label table; use meta_prob for probabilities",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Vec<Vec<f64>> {
        vec![v.to_vec()]
    }

    #[test]
    fn euclidean_examples() {
        let p = MissingPolicy::Skip;
        assert_eq!(euclidean(&[1., 2., 3.], &[1., 2., 3.], p, false).unwrap(), 0.0);
        assert_eq!(euclidean(&[0., 0.], &[3., 4.], p, false).unwrap(), 5.0);
        assert_eq!(euclidean(&[1., f64::NAN, 2.], &[1., 5., 4.], p, false).unwrap(), 2.0);
        assert_eq!(
            euclidean(&[f64::NAN, 1.], &[2., f64::NAN], p, false).unwrap(),
            f64::INFINITY
        );
        assert!(euclidean(&[1., f64::NAN], &[1., 2.], MissingPolicy::Error, false).is_err());
        assert!(euclidean(&[1.], &[1., 2.], p, false).is_err());
        // rescaling by p / observed = 3 / 2
        let r = euclidean(&[1., f64::NAN, 2.], &[1., 5., 4.], p, true).unwrap();
        assert!((r - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1., 2.], &[1., 2.]).unwrap(), 0.0);
        assert_eq!(cosine(&[1., 0.], &[0., 1.]).unwrap(), 1.0);
        assert_eq!(cosine(&[1., 0.], &[-1., 0.]).unwrap(), 2.0);
        assert!(cosine(&[0., 0.], &[1., 0.]).is_err());
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_dependent(&s(&[0., 0.]), &s(&[1., 1.]), None).unwrap(), 2.0);
        assert_eq!(dtw_dependent(&s(&[1., 2., 3.]), &s(&[1., 2., 2., 3.]), None).unwrap(), 0.0);
        assert!(dtw_dependent(&s(&[]), &s(&[1.]), None).is_err());
        assert!(dtw_dependent(&s(&[1.]), &[vec![1.], vec![2.]], None).is_err());
        // diagonal-only alignment
        let (a, b) = ([1., 5., 2.], [2., 1., 4.]);
        let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert_eq!(dtw_dependent(&s(&a), &s(&b), Some(0)).unwrap(), diag);
    }

    #[test]
    fn dtw_independent_single_channel_matches_dependent() {
        let (a, b) = (s(&[0.3, 1.5, -2.0, 0.1]), s(&[1.0, 0.2, 0.0]));
        assert_eq!(
            dtw_independent(&a, &b, None).unwrap(),
            dtw_dependent(&a, &b, None).unwrap()
        );
    }

    #[test]
    fn wl_examples() {
        let tri = Graph::new(vec!["a".into(); 3], [(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::new(vec!["a".into(); 3], [(0, 1), (1, 2)]).unwrap();
        assert_eq!(wl_distance(&tri, &tri, 2), 0.0);
        assert_eq!(wl_distance(&tri, &path, 0), 0.0);
        assert!(wl_distance(&tri, &path, 1) > 0.0);

        let mut plus = tri.clone();
        plus.nodes.push("z".into());
        assert_eq!(wl_distance(&tri, &plus, 0), 1.0 / 7.0);
    }

    #[test]
    fn spec_parsing_and_resolution() {
        let spec: DistanceSpec = "dtw_d:w=3".parse().unwrap();
        assert_eq!(spec.params["w"], serde_json::json!(3));
        assert_eq!(spec.to_string(), "dtw_d:w=3");
        let reg = Registry::with_builtins();
        assert_eq!(reg.resolve(&DistanceSpec::euclidean()).unwrap().name(), "euclidean");
        assert_eq!(reg.resolve(&spec).unwrap().name(), "dtw_d");
        assert!(matches!(
            reg.resolve(&DistanceSpec::new("nosuch")),
            Err(Error::UnknownDistance { .. })
        ));
        assert!(reg.resolve(&"dtw_d:window=3".parse().unwrap()).is_err());
        assert!(reg.resolve(&"wl:h=-1".parse().unwrap()).is_err());
        assert!(reg.resolve(&DistanceSpec::new("meta_class")).is_err());
    }

    #[test]
    fn plugin_registration() {
        #[derive(Debug)]
        struct Manhattan;
        impl DistanceMeasure for Manhattan {
            fn name(&self) -> &str {
                "manhattan"
            }
            fn accepts(&self, kind: PayloadKind) -> bool {
                kind == PayloadKind::Vector
            }
            fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
                let (Payload::Vector(x), Payload::Vector(y)) = (&a.payload, &b.payload) else {
                    return Err(Error::distance("manhattan", "vectors only"));
                };
                Ok(x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum())
            }
        }
        let mut reg = Registry::with_builtins();
        let plugin = Plugin::new("manhattan", &[PayloadKind::Vector], &[], |_| Ok(Arc::new(Manhattan)));
        reg.register(plugin.clone()).unwrap();
        assert!(reg.register(plugin).is_err());
        let m = reg.resolve(&DistanceSpec::new("manhattan")).unwrap();
        let d = m
            .distance(&Instance::vector("a", vec![0., 0.]), &Instance::vector("b", vec![1., -2.]))
            .unwrap();
        assert_eq!(d, 3.0);
    }
}
