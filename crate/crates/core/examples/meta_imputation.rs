//! Meta-imputation: a nearest-centroid model's predicted labels serve as the
//! forest's distance, and GAP imputes missing test values for that model.
//!
//!     cargo run --release --example meta_imputation [data-dir]

use pfgap::bench::{arrowhead_meta, BenchOptions};

fn main() -> pfgap::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").into());
    let rep = arrowhead_meta(&BenchOptions { data_dir: dir.into(), ..Default::default() })?;
    println!("seed  complete  initialized  imputed");
    for (seed, r) in &rep.rows {
        println!("{seed:>4}  {:>8.4}  {:>11.4}  {:>7.4}", r[0], r[1], r[2]);
    }
    for (k, v) in &rep.summary {
        println!("{k} = {v:.4}");
    }
    Ok(())
}
