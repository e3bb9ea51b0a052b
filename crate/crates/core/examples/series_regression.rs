//! Regression on univariate series with DTW splits and MAD purity. Runs the
//! flood benchmark when its files are in the data directory, otherwise a
//! generated task whose target is the amplitude of a noisy sine.
//!
//!     cargo run --release --example series_regression [data-dir]

use pfgap::bench::{flood, r2, BenchOptions};
use pfgap::dataset::{train_test_split, Dataset, Instance};
use pfgap::distance::DistanceSpec;
use pfgap::forest::{fit, ForestConfig, Purity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sines(n: usize, seed: u64) -> pfgap::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inst, mut y) = (Vec::new(), Vec::new());
    for i in 0..n {
        let amp = rng.gen_range(0.5..3.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (0..40).map(|t| amp * (0.3 * t as f64 + phase).sin() + rng.gen_range(-0.2..0.2)).collect();
        inst.push(Instance::series(format!("s{i}"), vec![s]));
        y.push(amp);
    }
    Dataset::regression(inst, y)
}

fn main() -> pfgap::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").into());
    let opts = BenchOptions { data_dir: dir.into(), seeds: vec![0], ..Default::default() };
    match flood(&opts) {
        Ok(rep) => print!("{}", rep.to_csv()),
        Err(e) => {
            println!("{e}\nfalling back to generated sine amplitudes");
            let (train, test) = train_test_split(&sines(300, 0)?, 0.25, false, 0)?;
            let mut cfg = ForestConfig::regression(vec![DistanceSpec::dtw_dependent(None)]).with_trees(50);
            cfg.purity = Purity::Mad;
            let forest = fit(&train, &cfg)?;
            let pred: Vec<f64> = forest.predict_many(&test.instances)?.iter().map(|t| t.real().unwrap()).collect();
            println!("test R^2 {:.4}", r2(&test.real_targets(), &pred));
        }
    }
    Ok(())
}
