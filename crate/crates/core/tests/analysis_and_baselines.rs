mod common;

use std::collections::BTreeMap;

use pfgap::analyze::{classical_mds, outlier_scores, outlier_scores_from};
use pfgap::bench::{knn_neighbors, knn_predict};
use pfgap::dataset::{inject_mcar, split_indices, train_test_split, CsvOptions, Dataset, Instance, Target};
use pfgap::distance::{self, DistanceSpec};
use pfgap::forest::{fit, ForestConfig};
use pfgap::gap::{compute_oob_proximities, SquareMatrix};
use proptest::prelude::*;

fn pairwise(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).collect())
        .collect()
}

fn centered_gram(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let dim = points[0].len();
    let mean: Vec<f64> = (0..dim).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
    let c: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    c.iter().map(|a| c.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()).collect()
}

fn double_centered(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = d.len();
    let sq: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
    let row: Vec<f64> = sq.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let all: f64 = row.iter().sum::<f64>() / n as f64;
    (0..n)
        .map(|a| (0..n).map(|b| -0.5 * (sq[a][b] - row[a] - row[b] + all)).collect())
        .collect()
}

/// Orthogonal Procrustes in the plane: residual after the best rotation or
/// reflection of centered `x` onto centered `y`.
fn procrustes_2d(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let center = |p: &[Vec<f64>]| {
        let n = p.len() as f64;
        let m = [p.iter().map(|v| v[0]).sum::<f64>() / n, p.iter().map(|v| v[1]).sum::<f64>() / n];
        p.iter().map(|v| [v[0] - m[0], v[1] - m[1]]).collect::<Vec<_>>()
    };
    let (x, y) = (center(x), center(y));
    let mut best = f64::INFINITY;
    for flip in [1.0, -1.0] {
        let (mut s11, mut s12, mut s21, mut s22) = (0.0, 0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(&y) {
            let a = [a[0], flip * a[1]];
            s11 += a[0] * b[0];
            s12 += a[0] * b[1];
            s21 += a[1] * b[0];
            s22 += a[1] * b[1];
        }
        let th = (s12 - s21).atan2(s11 + s22);
        let (c, s) = (th.cos(), th.sin());
        let r: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| {
                let a = [a[0], flip * a[1]];
                let p = [c * a[0] - s * a[1], s * a[0] + c * a[1]];
                (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)
            })
            .sum();
        best = best.min(r.sqrt());
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mds_recovers_planar_configurations(points in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 3..25)) {
        let d = pairwise(&points);
        let emb = classical_mds(&d, 2).unwrap();
        // skip near-collinear draws whose second axis is ill-conditioned
        prop_assume!(emb.eigenvalues[1] > 1e-3 * emb.eigenvalues[0].max(1.0));
        prop_assert!(procrustes_2d(&emb.coords, &points) < 1e-6);
    }

    #[test]
    fn mds_gram_reproduces_the_kept_eigenspace(points in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 4..20), dims in 1usize..4) {
        let d = pairwise(&points);
        let b = double_centered(&d);
        let emb = classical_mds(&d, dims).unwrap();
        let x = &emb.coords;
        let n = x.len();
        prop_assume!((0..dims.saturating_sub(1)).all(|k| emb.eigenvalues[k] - emb.eigenvalues[k + 1] > 1e-3));
        // B x_k = lambda_k x_k for every kept axis
        for k in 0..dims {
            let lambda = emb.eigenvalues[k];
            for a in 0..n {
                let bx: f64 = (0..n).map(|c| b[a][c] * x[c][k]).sum();
                prop_assert!((bx - lambda * x[a][k]).abs() < 1e-8 * lambda.abs().max(1.0));
            }
        }
        // X X^T equals B projected onto the kept eigenspace
        let proj = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for k in 0..dims {
                let norm: f64 = (0..n).map(|a| x[a][k] * x[a][k]).sum();
                if norm == 0.0 { continue; }
                let dot: f64 = (0..n).map(|a| x[a][k] * v[a]).sum();
                for a in 0..n { out[a] += dot / norm * x[a][k]; }
            }
            out
        };
        let pb: Vec<Vec<f64>> = b.iter().map(|row| proj(row)).collect();
        let cols: Vec<Vec<f64>> = (0..n).map(|c| proj(&pb.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
        for a in 0..n {
            for c in 0..n {
                let g: f64 = x[a].iter().zip(&x[c]).map(|(u, v)| u * v).sum();
                prop_assert!((g - cols[c][a]).abs() < 1e-8 * b[a][a].abs().max(1.0), "G[{}][{}] {} vs {}", a, c, g, cols[c][a]);
            }
        }
    }

    #[test]
    fn outlier_scores_are_permutation_equivariant(n in 4usize..20, seed in any::<u64>()) {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut p = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let v: f64 = rng.gen::<f64>() * 0.3;
                p[a * n + b] = v;
                p[b * n + a] = v;
            }
        }
        let d = common::vectors(&vec![vec![0.0]; n], &labels);
        let base = outlier_scores_from(&SquareMatrix { index: (0..n).collect(), values: p.clone() }, &d, 2).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // instance perm[a] of the permuted set is instance a of the original
        let mut pd_labels = vec![0; n];
        for a in 0..n { pd_labels[perm[a]] = labels[a]; }
        let pd = common::vectors(&vec![vec![0.0]; n], &pd_labels);
        let mut q = vec![0.0; n * n];
        for a in 0..n { for b in 0..n { q[perm[a] * n + perm[b]] = p[a * n + b]; } }
        let moved = outlier_scores_from(&SquareMatrix { index: (0..n).collect(), values: q }, &pd, 2).unwrap();
        for a in 0..n {
            let (r0, r1) = (&base.rows[a], &moved.rows[perm[a]]);
            // equal up to summation order
            let close = |u: f64, v: f64| u == v || (u - v).abs() <= 1e-12 * u.abs().max(1.0);
            prop_assert!(close(r0.raw, r1.raw), "raw {} vs {}", r0.raw, r1.raw);
            prop_assert!(close(r0.normalized, r1.normalized), "normalized {} vs {}", r0.normalized, r1.normalized);
            prop_assert!(r0.normalized >= 0.0);
        }
        // flags may break ties by index, so compare the flagged scores
        for c in 0..2 {
            let scores = |r: &pfgap::analyze::OutlierReport| {
                let mut v: Vec<f64> = r.rows.iter().filter(|x| x.class == c && x.flagged).map(|x| x.normalized).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let (s0, s1) = (scores(&base), scores(&moved));
            prop_assert_eq!(s0.len(), s1.len());
            for (u, v) in s0.iter().zip(&s1) {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn knn_matches_a_quadratic_scan(n in 1usize..200, k in 1usize..8, seed in any::<u64>()) {
        let k = k.min(n);
        let train = pfgap::bench::blobs(n, 3, 2, 1.0, 2.0, seed).unwrap();
        // rounding creates exact distance ties
        let train = Dataset { instances: train.instances.iter().map(|x| match &x.payload {
            pfgap::dataset::Payload::Vector(v) => Instance::vector(x.id.clone(), v.iter().map(|c| c.round()).collect()),
            _ => unreachable!(),
        }).collect(), ..train };
        let test = pfgap::bench::blobs(25, 3, 2, 1.0, 2.0, seed ^ 3).unwrap();
        let m = distance::resolve(&DistanceSpec::euclidean()).unwrap();
        let fast = knn_predict(&train, &test, k, &*m).unwrap();
        for (q, x) in test.instances.iter().enumerate() {
            // reference: repeated selection of the smallest remaining distance
            let mut used = vec![false; n];
            let mut votes = vec![0usize; train.n_classes()];
            let mut picked = Vec::new();
            for _ in 0..k {
                let mut best: Option<(f64, usize)> = None;
                for j in 0..n {
                    if used[j] { continue; }
                    let dj = m.distance(x, &train.instances[j]).unwrap();
                    if best.map_or(true, |(b, _)| dj < b) { best = Some((dj, j)); }
                }
                let (dj, j) = best.unwrap();
                used[j] = true;
                picked.push((dj, j));
                votes[train.targets[j].class().unwrap()] += 1;
            }
            prop_assert_eq!(knn_neighbors(&train, x, k, &*m).unwrap(), picked);
            let top = *votes.iter().max().unwrap();
            let want = votes.iter().position(|&v| v == top).unwrap();
            prop_assert_eq!(fast[q], Target::Class(want));
        }
    }

    #[test]
    fn mcar_keeps_masks_partitioned_and_is_reproducible(n in 2usize..40, frac in 0.0..0.75f64, seed in any::<u64>()) {
        let d = pfgap::bench::blobs(n, 2, 4, 1.0, 2.0, seed).unwrap();
        let a = inject_mcar(&d, frac, seed).unwrap();
        let b = inject_mcar(&d, frac, seed).unwrap();
        prop_assert_eq!(format!("{:?}", a), format!("{:?}", b));
        prop_assert_eq!(a.n_missing(), (frac * (4 * n) as f64).floor() as usize);
        for x in &a.instances {
            prop_assert!(x.mask.check_partition(&x.payload));
            let observed = (0..4).filter(|&t| !x.mask.is_missing(0, t)).count();
            prop_assert!(observed >= 1);
        }
        prop_assert!(a.validate().is_ok());
    }

    #[test]
    fn stratified_split_keeps_class_proportions(sizes in prop::collection::vec(1usize..40, 1..5), frac in 0.05..0.95f64, seed in any::<u64>()) {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat(c).take(s)).collect();
        let d = common::vectors(&vec![vec![1.0]; labels.len()], &labels);
        let (train, test) = split_indices(&d, frac, true, seed).unwrap();
        prop_assert_eq!(test.len(), (frac * labels.len() as f64).floor() as usize);
        prop_assert_eq!(train.len() + test.len(), labels.len());
        for (c, &s) in sizes.iter().enumerate() {
            let got = test.iter().filter(|&&i| labels[i] == c).count() as f64;
            prop_assert!((got - frac * s as f64).abs() <= 1.0 + 1e-9, "class {} got {} of {}", c, got, s);
        }
    }
}

#[test]
fn mds_two_point_closed_form() {
    let emb = classical_mds(&[vec![0.0, 4.0], vec![4.0, 0.0]], 2).unwrap();
    assert!((emb.eigenvalues[0] - 8.0).abs() < 1e-9);
    assert!((emb.coords[0][0].abs() - 2.0).abs() < 1e-9);
    assert!((emb.coords[0][0] + emb.coords[1][0]).abs() < 1e-9);
    assert_eq!(emb.coords[0][1], 0.0);
    let gram = centered_gram(&[vec![-2.0], vec![2.0]]);
    assert!((emb.coords[0][0] * emb.coords[1][0] - gram[0][1]).abs() < 1e-9);
}

#[test]
fn penguin_top_outliers_recur_across_forest_seeds() {
    let mut d = pfgap::dataset::load_csv_with(common::data_dir().join("penguins.csv"), &CsvOptions::new("species")).unwrap();
    d.standardize();
    let (train, _) = train_test_split(&d, 0.5, true, 0).unwrap();
    let mut counts: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); train.n_classes()];
    for seed in 0..5 {
        let forest = fit(&train, &ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(11).with_seed(seed)).unwrap();
        let report = outlier_scores(&compute_oob_proximities(&forest), &train, 3).unwrap();
        for (c, m) in counts.iter_mut().enumerate() {
            assert_eq!(report.flagged(c).len(), 3);
            for i in report.flagged(c) {
                *m.entry(i).or_default() += 1;
            }
        }
    }
    for (c, m) in counts.iter().enumerate() {
        assert!(m.values().any(|&k| k >= 2), "class {c}: no top-3 instance recurs across seeds: {m:?}");
    }
}

#[test]
fn meta_class_distance_triangle_inequality_on_a_finite_table() {
    use std::sync::Arc;
    let table = pfgap::meta::PredictionTable::from_labels((0..6).map(|i| (format!("i{i}"), format!("L{}", i % 3)))).unwrap();
    let m = distance::resolve(&DistanceSpec::new("meta_class").with_table(Arc::new(table))).unwrap();
    let xs: Vec<Instance> = (0..6).map(|i| Instance::vector(format!("i{i}"), vec![i as f64])).collect();
    for a in &xs {
        for b in &xs {
            for c in &xs {
                assert!(m.distance(a, c).unwrap() <= m.distance(a, b).unwrap() + m.distance(b, c).unwrap());
            }
        }
    }
    // distinct instances, same prediction
    assert_eq!(m.distance(&xs[0], &xs[3]).unwrap(), 0.0);
}
