//! Supervised imputation of points on the unit sphere with half of the
//! coordinates missing, compared with k-NN imputation.
//!
//!     cargo run --release --example sphere_imputation [seed]

use pfgap::bench::{knn_impute, sample_vmf_clusters, VmfParams};
use pfgap::dataset::{inject_mcar, train_test_split, Dataset};
use pfgap::distance::DistanceSpec;
use pfgap::forest::{fit, ForestConfig};
use pfgap::impute::{class_accuracy, gap_impute_test, gap_impute_train, ImputeConfig};

fn rmse(truth: &Dataset, masked: &Dataset, imputed: &Dataset) -> f64 {
    let mut se = Vec::new();
    for ((t, m), x) in truth.instances.iter().zip(&masked.instances).zip(&imputed.instances) {
        for &k in m.mask.missing(0) {
            se.push((t.payload.channel(0)[k] - x.payload.channel(0)[k]).powi(2));
        }
    }
    (se.iter().sum::<f64>() / se.len() as f64).sqrt()
}

fn main() -> pfgap::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let full = sample_vmf_clusters(VmfParams::default(), seed)?;
    let (train, test) = train_test_split(&full, 0.5, true, seed)?;
    let train_m = inject_mcar(&train, 0.5, 2 * seed + 1)?;
    let test_m = inject_mcar(&test, 0.5, 2 * seed + 2)?;

    let fc = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(11).with_seed(seed);
    let icfg = ImputeConfig::default();
    let report = gap_impute_train(&train_m, &fc, &icfg)?;
    for r in &report.iterations {
        println!("iteration {}: pseudo-missing R^2 {:.4}, {} fallbacks", r.iteration, r.score, r.fallbacks);
    }
    println!("selected iteration {}", report.selected);

    let forest = fit(&report.imputed, &fc)?;
    let test_gap = gap_impute_test(&report.imputed, &test_m, &forest, &icfg)?;
    let acc = class_accuracy(&forest.predict_many(&test_gap.imputed.instances)?, &test.targets);

    let train_knn = knn_impute(&train_m, &train_m, 5, true)?;
    let test_knn = knn_impute(&test_m, &train_m, 5, false)?;
    println!("train RMSE: GAP {:.4}, k-NN {:.4}", rmse(&train, &train_m, &report.imputed), rmse(&train, &train_m, &train_knn));
    println!("test  RMSE: GAP {:.4}, k-NN {:.4}", rmse(&test, &test_m, &test_gap.imputed), rmse(&test, &test_m, &test_knn));
    println!("PF accuracy on GAP-imputed test: {acc:.4}");
    Ok(())
}
