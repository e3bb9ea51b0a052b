//! Within-class outlier scores and a 2-D MDS embedding from GAP proximities
//! on the penguins table.
//!
//!     cargo run --release --example penguin_outliers_mds [data-dir]

use pfgap::analyze::{classical_mds, outlier_scores};
use pfgap::dataset::{load_csv_with, train_test_split, CsvOptions};
use pfgap::distance::DistanceSpec;
use pfgap::forest::{fit, ForestConfig};
use pfgap::gap::{compute_oob_proximities, symmetrize_and_dissimilarity};

fn main() -> pfgap::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").into());
    let mut d = load_csv_with(format!("{dir}/penguins.csv"), &CsvOptions::new("species"))?;
    d.standardize();
    let (train, _) = train_test_split(&d, 0.5, true, 0)?;

    let forest = fit(&train, &ForestConfig::classification(vec![DistanceSpec::euclidean()]).with_trees(11))?;
    let gap = compute_oob_proximities(&forest);

    let report = outlier_scores(&gap, &train, 3)?;
    for (c, name) in train.classes.iter().enumerate() {
        let top: Vec<String> = report
            .flagged(c)
            .iter()
            .map(|&i| {
                let row = report.rows.iter().find(|r| r.instance == i).unwrap();
                format!("{} ({:.2})", train.instances[i].id, row.normalized)
            })
            .collect();
        println!("{name:<10} top outliers: {}", top.join(", "));
    }

    let dissim = symmetrize_and_dissimilarity(&gap);
    let emb = classical_mds(&dissim.rows(), 2)?;
    println!("MDS eigenvalues {:.3?}", emb.eigenvalues);
    for (k, c) in emb.coords.iter().take(5).enumerate() {
        let i = dissim.index[k];
        println!("{:>6} {:>10} ({:+.3}, {:+.3})", train.instances[i].id, train.classes[train.targets[i].class().unwrap()], c[0], c[1]);
    }
    Ok(())
}
