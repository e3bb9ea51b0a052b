//! Fit a forest on a CSV table, score it out of bag, and check that the GAP
//! proximities reproduce the out-of-bag vote.
//!
//!     cargo run --release --example quickstart [data-dir]

use pfgap::dataset::{load_csv_with, train_test_split, CsvOptions};
use pfgap::distance::DistanceSpec;
use pfgap::forest::{fit, ForestConfig};
use pfgap::gap::{compute_oob_proximities, proximity_weighted_prediction};
use pfgap::impute::class_accuracy;

fn main() -> pfgap::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").into());
    let mut d = load_csv_with(format!("{dir}/penguins.csv"), &CsvOptions::new("species"))?;
    d.standardize();
    let (train, test) = train_test_split(&d, 0.2, true, 0)?;

    let cfg = ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(100).with_seed(0);
    let forest = fit(&train, &cfg)?;

    let oob = forest.predict_oob();
    let covered: Vec<usize> = (0..train.len()).filter(|&i| oob.predictions[i].is_some()).collect();
    let hits = covered.iter().filter(|&&i| oob.predictions[i] == Some(train.targets[i])).count();
    println!("out-of-bag accuracy {:.4} on {} covered instances", hits as f64 / covered.len() as f64, covered.len());

    let gap = compute_oob_proximities(&forest);
    let recon = proximity_weighted_prediction(&gap, &train);
    let agree = gap.rows.iter().zip(&recon).filter(|(&i, p)| oob.predictions[i] == Some(**p)).count();
    println!("GAP-weighted vote matches the OOB vote on {agree}/{} rows", gap.n_rows());

    let pred = forest.predict_many(&test.instances)?;
    println!("test accuracy {:.4}", class_accuracy(&pred, &test.targets));
    Ok(())
}
