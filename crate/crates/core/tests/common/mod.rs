#![allow(dead_code)]

use std::path::PathBuf;

use pfgap::dataset::{Dataset, Instance, Target};
use pfgap::forest::Forest;

pub fn data_dir() -> PathBuf {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    p.canonicalize().unwrap_or(p)
}

pub fn vectors(rows: &[Vec<f64>], labels: &[usize]) -> Dataset {
    let inst = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Instance::vector(format!("i{i}"), r.clone()))
        .collect();
    let names: Vec<String> = labels.iter().map(|l| format!("c{l}")).collect();
    Dataset::classification(inst, &names).unwrap()
}

/// Straight-line GAP proximities: for every training instance and every tree
/// where it is out of bag, route it and every in-bag instance and compare
/// leaves. Returns `None` for instances that are in bag everywhere.
pub fn gap_oracle(forest: &Forest) -> Vec<Option<Vec<f64>>> {
    let n = forest.n_train();
    let leaf_of = |t: usize, j: usize| forest.route(t, &forest.train.instances[j]).unwrap().leaf;
    (0..n)
        .map(|i| {
            let s: Vec<usize> = (0..forest.trees.len())
                .filter(|&t| forest.trees[t].multiplicity[i] == 0)
                .collect();
            if s.is_empty() {
                return None;
            }
            let mut p = vec![0.0; n];
            for &t in &s {
                let li = leaf_of(t, i);
                let c = &forest.trees[t].multiplicity;
                let same: Vec<usize> = (0..n).filter(|&j| c[j] > 0 && leaf_of(t, j) == li).collect();
                let m: u32 = same.iter().map(|&j| c[j]).sum();
                for j in same {
                    p[j] += c[j] as f64 / m as f64;
                }
            }
            p.iter_mut().for_each(|v| *v /= s.len() as f64);
            Some(p)
        })
        .collect()
}

pub fn accuracy(pred: &[Target], truth: &[Target]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
