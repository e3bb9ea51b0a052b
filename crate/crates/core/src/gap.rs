//! GAP proximities.
//!
//! For a row instance `i`, let `S_i` be the trees where `i` is out-of-bag
//! (all trees for a test instance). Then
//!
//! ```text
//! p(i, j) = 1/|S_i| * sum_{t in S_i} I(j in J_i(t)) * c_j(t) / |M_i(t)|
//! ```
//!
//! where `J_i(t)` are the in-bag instances sharing `i`'s leaf in tree `t`,
//! `c_j(t)` is `j`'s bootstrap multiplicity and `|M_i(t)|` the leaf's total
//! in-bag multiplicity. Each tree contributes a probability distribution, so
//! every row sums to one.

use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::forest::{argmax_lowest, Forest, Leaf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Oob,
    Test,
}

/// Row-sparse proximity matrix; columns are training instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMatrix {
    pub kind: GapKind,
    /// Row instance indices (training indices for OOB, test indices otherwise).
    pub rows: Vec<usize>,
    /// Per-row `(column, proximity)` entries sorted by column.
    pub entries: Vec<Vec<(usize, f64)>>,
    pub n_cols: usize,
    /// Training instances with empty `S_i` (OOB only); they have no row.
    pub uncovered: Vec<usize>,
}

impl GapMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Row position of instance `i`, if it has a row.
    pub fn row_of(&self, i: usize) -> Option<usize> {
        self.rows.binary_search(&i).ok()
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.entries[r]
    }

    pub fn get(&self, r: usize, col: usize) -> f64 {
        let row = &self.entries[r];
        row.binary_search_by_key(&col, |e| e.0).map_or(0.0, |k| row[k].1)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_error(&self) -> f64 {
        self.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    /// Dense `n_rows x n_cols` copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.n_cols];
                for &(j, p) in row {
                    dense[j] = p;
                }
                dense
            })
            .collect()
    }

    /// Writes `row_id col_id value` lines, one per nonzero entry.
    pub fn write_triplets(&self, path: impl AsRef<Path>, row_ids: &[String], col_ids: &[String]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (r, row) in self.entries.iter().enumerate() {
            for &(j, p) in row {
                writeln!(w, "{} {} {:e}", row_ids[self.rows[r]], col_ids[j], p).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Dense CSV with a header of column ids; refused above 2000 columns.
    pub fn write_dense_csv(&self, path: impl AsRef<Path>, row_ids: &[String], col_ids: &[String]) -> Result<()> {
        if self.n_cols > 2000 {
            return Err(Error::Config(format!(
                "dense export is limited to 2000 columns (have {}); use triplets",
                self.n_cols
            )));
        }
        let dense = self.to_dense();
        let rows = dense
            .iter()
            .enumerate()
            .map(|(r, row)| (row_ids[self.rows[r]].clone(), row.clone()));
        write_matrix_csv(path, col_ids, rows)
    }
}

fn write_matrix_csv(
    path: impl AsRef<Path>,
    col_ids: &[String],
    rows: impl Iterator<Item = (String, Vec<f64>)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut header = vec!["id".to_owned()];
    header.extend(col_ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (id, row) in rows {
        let mut rec = vec![id];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Accumulates the normalized in-bag cohorts of the given leaves.
fn accumulate<'a>(leaves: impl Iterator<Item = &'a Leaf>, n_cols: usize, scratch: &mut Vec<f64>) -> Vec<(usize, f64)> {
    scratch.clear();
    scratch.resize(n_cols, 0.0);
    let mut touched = Vec::new();
    let mut n_trees = 0usize;
    for leaf in leaves {
        n_trees += 1;
        let m = leaf.weight as f64;
        for &(j, c) in &leaf.members {
            if scratch[j] == 0.0 {
                touched.push(j);
            }
            scratch[j] += c as f64 / m;
        }
    }
    touched.sort_unstable();
    let s = n_trees as f64;
    touched.into_iter().map(|j| (j, scratch[j] / s)).collect()
}

/// OOB-to-in-bag proximities for every covered training instance.
pub fn compute_oob_proximities(forest: &Forest) -> GapMatrix {
    let n = forest.n_train();
    let mut per_instance: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (t, tree) in forest.trees.iter().enumerate() {
        for &(i, leaf) in &tree.oob_leaves {
            per_instance[i].push((t, leaf));
        }
    }
    let rows: Vec<usize> = (0..n).filter(|&i| !per_instance[i].is_empty()).collect();
    let uncovered: Vec<usize> = (0..n).filter(|&i| per_instance[i].is_empty()).collect();
    if !uncovered.is_empty() {
        log::warn!("{} training instances are in-bag in every tree and get no proximity row", uncovered.len());
    }
    let entries = rows
        .par_iter()
        .map_init(Vec::new, |scratch, &i| {
            let leaves = per_instance[i].iter().map(|&(t, l)| forest.trees[t].leaf(l));
            accumulate(leaves, n, scratch)
        })
        .collect();
    GapMatrix {
        kind: GapKind::Oob,
        rows,
        entries,
        n_cols: n,
        uncovered,
    }
}

/// Test-to-train proximities; every tree counts as out-of-sample.
pub fn compute_test_proximities(forest: &Forest, test: &Dataset) -> Result<GapMatrix> {
    let n = forest.n_train();
    let entries = test
        .instances
        .par_iter()
        .map_init(Vec::new, |scratch, x| {
            let routes = forest.route_all(x)?;
            let leaves = routes.iter().enumerate().map(|(t, r)| forest.trees[t].leaf(r.leaf));
            Ok(accumulate(leaves, n, scratch))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapMatrix {
        kind: GapKind::Test,
        rows: (0..test.len()).collect(),
        entries,
        n_cols: n,
        uncovered: Vec::new(),
    })
}

/// Proximity-weighted vote (classification) or mean (regression) per row.
pub fn proximity_weighted_prediction(gap: &GapMatrix, train: &Dataset) -> Vec<Target> {
    gap.entries
        .par_iter()
        .map(|row| match train.task {
            Task::Classification => {
                let mut scores = vec![0.0; train.n_classes()];
                for &(j, p) in row {
                    if let Target::Class(c) = train.targets[j] {
                        scores[c] += p;
                    }
                }
                Target::Class(argmax_lowest(&scores))
            }
            Task::Regression => Target::Real(
                row.iter()
                    .map(|&(j, p)| p * train.targets[j].real().unwrap_or(0.0))
                    .sum(),
            ),
        })
        .collect()
}

/// Dense symmetric matrix over the covered OOB rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    /// Training indices of the rows/columns, in order.
    pub index: Vec<usize>,
    pub values: Vec<f64>,
}

impl SquareMatrix {
    pub fn n(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n() + b]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n().max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
        let names: Vec<String> = self.index.iter().map(|&i| ids[i].clone()).collect();
        let rows = self
            .rows()
            .into_iter()
            .zip(&names)
            .map(|(r, id)| (id.clone(), r))
            .collect::<Vec<_>>();
        write_matrix_csv(path, &names, rows.into_iter())
    }
}

/// `p_sym(i, j) = (p(i, j) + p(j, i)) / 2` over covered rows, clamped to `[0, 1]`.
pub fn symmetrize(gap: &GapMatrix) -> SquareMatrix {
    let index = gap.rows.clone();
    let n = index.len();
    let mut values = vec![0.0; n * n];
    for (a, row) in gap.entries.iter().enumerate() {
        for &(j, p) in row {
            if let Some(b) = gap.row_of(j) {
                values[a * n + b] += p / 2.0;
                values[b * n + a] += p / 2.0;
            }
        }
    }
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    SquareMatrix { index, values }
}

/// `d(i, j) = sqrt(1 - p_sym(i, j))` with a zero diagonal.
pub fn symmetrize_and_dissimilarity(gap: &GapMatrix) -> SquareMatrix {
    let mut m = symmetrize(gap);
    let n = m.n();
    for a in 0..n {
        for b in 0..n {
            let v = &mut m.values[a * n + b];
            *v = if a == b { 0.0 } else { (1.0 - *v).sqrt() };
        }
    }
    m
}
