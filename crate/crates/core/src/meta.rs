//! Model-informed distances.
//!
//! A pretrained classifier is represented only by its outputs on the
//! instances the forest will see, stored in a [`PredictionTable`]. Two
//! instances are compared through those outputs: label agreement
//! ([`MetaClassDistance`]) or the Euclidean distance between probability
//! vectors ([`MetaProbDistance`]). Neither is a metric (distinct instances may
//! sit at distance zero), which the forest does not require.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, PayloadKind};
use crate::distance::{DistanceMeasure, DistanceSpec};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;

const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionForm {
    Labels,
    Probabilities,
}

/// Static outputs of an external model, keyed by instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "rows", rename_all = "lowercase")]
pub enum PredictionTable {
    Labels(BTreeMap<String, String>),
    Probabilities(BTreeMap<String, Vec<f64>>),
}

impl PredictionTable {
    pub fn from_labels<I, K, V>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in rows {
            let k = k.into();
            if map.insert(k.clone(), v.into()).is_some() {
                return Err(Error::Data(format!("duplicate prediction id `{k}`")));
            }
        }
        Ok(PredictionTable::Labels(map))
    }

    pub fn from_probabilities<I, K>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, Vec<f64>)>,
        K: Into<String>,
    {
        let mut map = BTreeMap::new();
        let mut width = None;
        for (k, row) in rows {
            let k = k.into();
            check_probability_row(&k, &row)?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(Error::Data(format!(
                    "probability row `{k}` has {} entries, expected {}",
                    row.len(),
                    width.unwrap()
                )));
            }
            if map.insert(k.clone(), row).is_some() {
                return Err(Error::Data(format!("duplicate prediction id `{k}`")));
            }
        }
        Ok(PredictionTable::Probabilities(map))
    }

    /// Reads `id,label` or `id,p_1,..,p_m` rows (header required). The label
    /// form is chosen when the header has exactly two columns and the second
    /// one is named `label`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            return Ok(PredictionTable::Labels(BTreeMap::new()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::format(path, 1, e.to_string()))?
            .clone();
        let label_form = headers.len() == 2 && headers[1].trim() == "label";
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            let line = r + 2;
            let rec = rec.map_err(|e| Error::format(path, line, e.to_string()))?;
            let id = rec[0].trim().to_owned();
            if label_form {
                labels.push((id, rec[1].trim().to_owned()));
            } else {
                let row = rec
                    .iter()
                    .skip(1)
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::format(path, line, e.to_string()))?;
                probs.push((id, row));
            }
        }
        if label_form {
            PredictionTable::from_labels(labels)
        } else {
            PredictionTable::from_probabilities(probs)
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        match self {
            PredictionTable::Labels(map) => {
                out.push_str("id,label\n");
                for (k, v) in map {
                    out.push_str(&format!("{k},{v}\n"));
                }
            }
            PredictionTable::Probabilities(map) => {
                let m = map.values().next().map_or(0, Vec::len);
                out.push_str("id");
                for c in 0..m {
                    out.push_str(&format!(",p{c}"));
                }
                out.push('\n');
                for (k, row) in map {
                    out.push_str(k);
                    for v in row {
                        out.push_str(&format!(",{v}"));
                    }
                    out.push('\n');
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn form(&self) -> PredictionForm {
        match self {
            PredictionTable::Labels(_) => PredictionForm::Labels,
            PredictionTable::Probabilities(_) => PredictionForm::Probabilities,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PredictionTable::Labels(m) => m.len(),
            PredictionTable::Probabilities(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        match self {
            PredictionTable::Labels(m) => m.contains_key(id),
            PredictionTable::Probabilities(m) => m.contains_key(id),
        }
    }

    pub fn label(&self, id: &str) -> Result<&str> {
        match self {
            PredictionTable::Labels(m) => m
                .get(id)
                .map(String::as_str)
                .ok_or_else(|| Error::MissingPrediction(id.to_owned())),
            PredictionTable::Probabilities(_) => Err(Error::Data(
                "prediction table holds probabilities, not labels".into(),
            )),
        }
    }

    pub fn probabilities(&self, id: &str) -> Result<&[f64]> {
        match self {
            PredictionTable::Probabilities(m) => m
                .get(id)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::MissingPrediction(id.to_owned())),
            PredictionTable::Labels(_) => Err(Error::Data(
                "prediction table holds labels, not probabilities".into(),
            )),
        }
    }

    /// Number of probability columns (zero for label tables).
    pub fn width(&self) -> usize {
        match self {
            PredictionTable::Probabilities(m) => m.values().next().map_or(0, Vec::len),
            PredictionTable::Labels(_) => 0,
        }
    }

    /// Adds the rows of `other`, which must have the same form.
    pub fn merge(&mut self, other: &PredictionTable) -> Result<()> {
        match (self, other) {
            (PredictionTable::Labels(a), PredictionTable::Labels(b)) => {
                for (k, v) in b {
                    if a.insert(k.clone(), v.clone()).is_some() {
                        return Err(Error::Data(format!("duplicate prediction id `{k}`")));
                    }
                }
            }
            (PredictionTable::Probabilities(a), PredictionTable::Probabilities(b)) => {
                for (k, v) in b {
                    if a.insert(k.clone(), v.clone()).is_some() {
                        return Err(Error::Data(format!("duplicate prediction id `{k}`")));
                    }
                }
            }
            _ => return Err(Error::Data("cannot merge label and probability tables".into())),
        }
        Ok(())
    }
}

fn check_probability_row(id: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data(format!("probability row `{id}` has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::Data(format!("probability row `{id}` sums to {sum}, not 1")));
    }
    Ok(())
}

/// Label-agreement distance: 0 when the model predicts the same label for both
/// instances, 1 otherwise.
pub fn meta_class_distance(x: &Instance, y: &Instance, table: &PredictionTable) -> Result<f64> {
    let a = table.label(&x.id)?;
    let b = table.label(&y.id)?;
    Ok(if a == b { 0.0 } else { 1.0 })
}

/// Euclidean distance between the model's probability vectors.
pub fn meta_prob_distance(x: &Instance, y: &Instance, table: &PredictionTable) -> Result<f64> {
    let a = table.probabilities(&x.id)?;
    let b = table.probabilities(&y.id)?;
    if a.len() != b.len() {
        return Err(Error::distance(
            "meta_prob",
            format!("probability widths differ ({} vs {})", a.len(), b.len()),
        ));
    }
    Ok(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
}

#[derive(Debug)]
pub struct MetaClassDistance {
    pub table: Arc<PredictionTable>,
}

impl DistanceMeasure for MetaClassDistance {
    fn name(&self) -> &str {
        "meta_class"
    }

    fn accepts(&self, _kind: PayloadKind) -> bool {
        true
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        meta_class_distance(a, b, &self.table)
    }
}

#[derive(Debug)]
pub struct MetaProbDistance {
    pub table: Arc<PredictionTable>,
}

impl DistanceMeasure for MetaProbDistance {
    fn name(&self) -> &str {
        "meta_prob"
    }

    fn accepts(&self, _kind: PayloadKind) -> bool {
        true
    }

    fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        meta_prob_distance(a, b, &self.table)
    }
}

/// Adds a model-informed distance to `cfg`. Every id in `train_ids` must be
/// covered by the table.
pub fn attach_meta_distance<'a>(
    cfg: &ForestConfig,
    table: Arc<PredictionTable>,
    form: PredictionForm,
    train_ids: impl IntoIterator<Item = &'a str>,
) -> Result<ForestConfig> {
    if table.is_empty() {
        return Err(Error::Data("prediction table is empty".into()));
    }
    if table.form() != form {
        return Err(Error::Data(format!(
            "requested {form:?} distance but the table holds {:?}",
            table.form()
        )));
    }
    if form == PredictionForm::Probabilities && table.width() < 2 {
        return Err(Error::Data(
            "probability tables need at least two classes".into(),
        ));
    }
    let missing: BTreeSet<&str> = train_ids.into_iter().filter(|id| !table.contains(id)).collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::Data(format!(
            "prediction table does not cover {} training ids: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let name = match form {
        PredictionForm::Labels => "meta_class",
        PredictionForm::Probabilities => "meta_prob",
    };
    let mut out = cfg.clone();
    out.distances.push(DistanceSpec::new(name).with_table(table));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Instance;

    fn inst(id: &str) -> Instance {
        Instance::vector(id, vec![0.0])
    }

    #[test]
    fn class_distance_values() {
        let t = PredictionTable::from_labels([("x", "A"), ("y", "A"), ("z", "B")]).unwrap();
        assert_eq!(meta_class_distance(&inst("x"), &inst("y"), &t).unwrap(), 0.0);
        assert_eq!(meta_class_distance(&inst("x"), &inst("z"), &t).unwrap(), 1.0);
        assert_eq!(meta_class_distance(&inst("z"), &inst("z"), &t).unwrap(), 0.0);
        assert!(matches!(
            meta_class_distance(&inst("x"), &inst("q"), &t),
            Err(Error::MissingPrediction(_))
        ));
    }

    #[test]
    fn class_distance_is_pseudo_metric_with_triangle_inequality() {
        let ids = ["a", "b", "c", "d", "e"];
        let labels = ["0", "1", "0", "2", "1"];
        let t = PredictionTable::from_labels(ids.iter().zip(labels.iter()).map(|(a, b)| (*a, *b))).unwrap();
        let d = |a: &str, b: &str| meta_class_distance(&inst(a), &inst(b), &t).unwrap();
        assert_eq!(d("a", "c"), 0.0);
        for x in ids {
            for y in ids {
                assert_eq!(d(x, y), d(y, x));
                assert!(d(x, y) == 0.0 || d(x, y) == 1.0);
                for z in ids {
                    assert!(d(x, z) <= d(x, y) + d(y, z));
                }
            }
        }
    }

    #[test]
    fn prob_distance_values() {
        let t = PredictionTable::from_probabilities([
            ("x", vec![1.0, 0.0]),
            ("y", vec![0.0, 1.0]),
            ("u", vec![0.5, 0.5]),
            ("v", vec![0.5, 0.5]),
        ])
        .unwrap();
        let d = meta_prob_distance(&inst("x"), &inst("y"), &t).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(meta_prob_distance(&inst("u"), &inst("v"), &t).unwrap(), 0.0);
        assert!(PredictionTable::from_probabilities([("x", vec![0.2, 0.3, 0.5])]).is_ok());
        assert!(PredictionTable::from_probabilities([("x", vec![0.2, 0.3, 0.6])]).is_err());
    }

    #[test]
    fn attach_checks_coverage_and_width() {
        let cfg = ForestConfig::classification(vec![]);
        let empty = Arc::new(PredictionTable::Labels(BTreeMap::new()));
        assert!(attach_meta_distance(&cfg, empty, PredictionForm::Labels, ["a"]).is_err());

        let t = Arc::new(PredictionTable::from_labels([("a", "0")]).unwrap());
        assert!(attach_meta_distance(&cfg, t.clone(), PredictionForm::Labels, ["a", "b"]).is_err());
        let cfg2 = attach_meta_distance(&cfg, t, PredictionForm::Labels, ["a"]).unwrap();
        assert_eq!(cfg2.distances.last().unwrap().name, "meta_class");

        let degenerate = Arc::new(PredictionTable::from_probabilities([("a", vec![1.0])]).unwrap());
        assert!(attach_meta_distance(&cfg, degenerate, PredictionForm::Probabilities, ["a"]).is_err());
    }
}
