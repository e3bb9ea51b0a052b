//! Multivariate series of unequal length classified with a forest that draws
//! dependent or independent DTW at each split.
//!
//!     cargo run --release --example vowels_dtw [data-dir] [trees]

use pfgap::bench::{vowels, BenchOptions};

fn main() -> pfgap::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").into());
    let trees = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let opts = BenchOptions { data_dir: dir.into(), seeds: vec![0, 1, 2], trees: Some(trees), ..Default::default() };
    let rep = vowels(&opts)?;
    for (seed, row) in &rep.rows {
        println!("seed {seed}: PF {:.4}, 1-NN DTW {:.4}", row[0], row[1]);
    }
    print!("{}", rep.to_csv());
    Ok(())
}
