//! Outlier scores and MDS embeddings derived from GAP proximities.

use std::path::Path;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gap::{symmetrize, GapMatrix, SquareMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierRow {
    /// Training index.
    pub instance: usize,
    pub class: usize,
    /// `1 / sum_{j != i, same class} p_sym(i, j)^2`; infinite for an instance
    /// with no within-class proximity.
    pub raw: f64,
    /// `(raw - median) / MAD` within the class, clamped at zero; equals
    /// `raw` for classes too small to normalize.
    pub normalized: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub rows: Vec<OutlierRow>,
    pub top_q: usize,
}

impl OutlierReport {
    /// Flagged training indices of one class, highest score first.
    pub fn flagged(&self, class: usize) -> Vec<usize> {
        let mut rows: Vec<&OutlierRow> = self.rows.iter().filter(|r| r.class == class && r.flagged).collect();
        rows.sort_by(|a, b| b.normalized.total_cmp(&a.normalized).then(a.instance.cmp(&b.instance)));
        rows.iter().map(|r| r.instance).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, train: &Dataset) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["id", "class", "raw", "normalized", "flag"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                train.instances[r.instance].id.clone(),
                train.classes[r.class].clone(),
                r.raw.to_string(),
                r.normalized.to_string(),
                u8::from(r.flagged).to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            (a + b) / 2.0
        }
    }
}

/// Within-class outlier scores over the covered rows of an OOB matrix.
pub fn outlier_scores(gap: &GapMatrix, train: &Dataset, top_q: usize) -> Result<OutlierReport> {
    let sym = symmetrize(gap);
    outlier_scores_from(&sym, train, top_q)
}

/// Within-class outlier scores from symmetric proximities.
pub fn outlier_scores_from(sym: &SquareMatrix, train: &Dataset, top_q: usize) -> Result<OutlierReport> {
    let labels: Vec<usize> = sym
        .index
        .iter()
        .map(|&i| {
            train.targets[i]
                .class()
                .ok_or_else(|| Error::Config("outlier scores need class targets".into()))
        })
        .collect::<Result<_>>()?;
    let n = sym.n();
    let raw: Vec<f64> = (0..n)
        .map(|a| {
            let s: f64 = (0..n)
                .filter(|&b| b != a && labels[b] == labels[a])
                .map(|b| sym.get(a, b).powi(2))
                .sum();
            if s > 0.0 {
                1.0 / s
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut normalized = raw.clone();
    let mut flagged = vec![false; n];
    for class in 0..train.n_classes() {
        let members: Vec<usize> = (0..n).filter(|&a| labels[a] == class).collect();
        if members.len() >= 3 {
            let mut vals: Vec<f64> = members.iter().map(|&a| raw[a]).collect();
            let med = median_of(&mut vals);
            let mut dev: Vec<f64> = members
                .iter()
                .map(|&a| if raw[a] == med { 0.0 } else { (raw[a] - med).abs() })
                .collect();
            let mad = median_of(&mut dev);
            for &a in &members {
                let centered = if raw[a] == med { 0.0 } else { raw[a] - med };
                let z = if mad > 0.0 && mad.is_finite() { centered / mad } else { centered };
                normalized[a] = if z.is_nan() { f64::INFINITY } else { z.max(0.0) };
            }
        } else if !members.is_empty() {
            log::warn!(
                "class `{}` has {} covered members; outlier scores are not normalized",
                train.classes[class],
                members.len()
            );
        }
        let mut order = members;
        order.sort_by(|&a, &b| normalized[b].total_cmp(&normalized[a]).then(a.cmp(&b)));
        for &a in order.iter().take(top_q) {
            flagged[a] = true;
        }
    }
    Ok(OutlierReport {
        rows: (0..n)
            .map(|a| OutlierRow {
                instance: sym.index[a],
                class: labels[a],
                raw: raw[a],
                normalized: normalized[a],
                flagged: flagged[a],
            })
            .collect(),
        top_q,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n x dims` coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Eigenvalues of the double-centered matrix, largest first (negative
    /// ones are reported but their axes are zeroed).
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn write_csv(&self, path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let dims = self.eigenvalues.len();
        let mut header = vec!["id".to_owned()];
        header.extend((1..=dims).map(|d| format!("x{d}")));
        w.write_record(&header).map_err(err)?;
        for (id, row) in ids.iter().zip(&self.coords) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

fn mat_vec(a: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i * n..(i + 1) * n].iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic start vector with components of varied magnitude.
fn start_vector(n: usize) -> Vec<f64> {
    let mut state: u64 = 0x2545_F491_4F6C_DD1D;
    let v: Vec<f64> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 + 0.5
        })
        .collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Dominant eigenpair of a symmetric matrix (largest algebraic eigenvalue
/// when the matrix is positive semidefinite), orthogonal to `deflate`.
fn power_iteration(a: &[f64], n: usize, deflate: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let orthogonalize = |v: &mut Vec<f64>| {
        for u in deflate {
            let d: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
    };
    let mut v = start_vector(n);
    orthogonalize(&mut v);
    let s = norm(&v);
    if s == 0.0 {
        return (0.0, v);
    }
    v.iter_mut().for_each(|x| *x /= s);
    let mut av = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        mat_vec(a, n, &v, &mut av);
        orthogonalize(&mut av);
        lambda = v.iter().zip(&av).map(|(x, y)| x * y).sum();
        let s = norm(&av);
        if s == 0.0 {
            return (0.0, v);
        }
        let residual = av
            .iter()
            .zip(&v)
            .map(|(y, x)| (y - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        v.iter_mut().zip(&av).for_each(|(x, y)| *x = y / s);
        if residual <= POWER_TOL * lambda.abs().max(1.0) {
            break;
        }
    }
    (lambda, v)
}

/// Classical (Torgerson) MDS of a symmetric dissimilarity matrix.
pub fn classical_mds(dissim: &[Vec<f64>], dims: usize) -> Result<Embedding> {
    let n = dissim.len();
    if dims > n {
        return Err(Error::Config(format!("cannot embed {n} points in {dims} dimensions")));
    }
    if dissim.iter().any(|r| r.len() != n) {
        return Err(Error::Data("dissimilarity matrix is not square".into()));
    }
    // B = -1/2 J D^2 J
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = -0.5 * dissim[i][j] * dissim[i][j];
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| b[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n.max(1) as f64;
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += grand - row_mean[i] - row_mean[j];
        }
    }

    // shift by the most negative eigenvalue so power iteration ranks by
    // algebraic value
    let (dominant, _) = power_iteration(&b, n, &[]);
    let mut shifted = b.clone();
    for i in 0..n {
        shifted[i * n + i] -= dominant.max(0.0);
    }
    let (low, _) = power_iteration(&shifted, n, &[]);
    let lambda_min = low + dominant.max(0.0);
    let sigma = (-lambda_min).max(0.0);
    let mut a = b;
    for i in 0..n {
        a[i * n + i] += sigma;
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(dims);
    let mut eigenvalues = Vec::with_capacity(dims);
    for _ in 0..dims {
        let (mu, v) = power_iteration(&a, n, &vectors);
        eigenvalues.push(mu - sigma);
        vectors.push(v);
    }
    if eigenvalues.iter().any(|&l| l < -1e-9) {
        log::warn!("negative eigenvalues truncated to zero in the MDS embedding");
    }
    let coords = (0..n)
        .map(|i| {
            vectors
                .iter()
                .zip(&eigenvalues)
                .map(|(v, &l)| v[i] * l.max(0.0).sqrt())
                .collect()
        })
        .collect();
    Ok(Embedding { coords, eigenvalues })
}
