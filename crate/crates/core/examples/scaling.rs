//! Distance evaluations per query as the training set grows, against the
//! linear cost of a nearest-neighbor scan.
//!
//!     cargo run --release --example scaling

use pfgap::bench::{scaling, BenchOptions};

fn main() -> pfgap::Result<()> {
    let rep = scaling(&BenchOptions::default())?;
    println!("{:>6} {:>10} {:>8}", "n", "pf evals", "ratio");
    for (_, r) in &rep.rows {
        println!("{:>6} {:>10.1} {:>7.2}%", r[0], r[2], 100.0 * r[4]);
    }
    println!("evals ~ {:.2} log2(n), R^2 {:.4}", rep.summary["c"], rep.summary["r2_log_fit"]);
    Ok(())
}
