//! Registering a distance under a new name and using it in a forest.
//!
//!     cargo run --release --example custom_distance

use std::sync::Arc;

use pfgap::bench::blobs;
use pfgap::dataset::{train_test_split, Instance, PayloadKind};
use pfgap::distance::{self, DistanceMeasure, DistanceSpec, Plugin};
use pfgap::forest::{fit, ForestConfig};
use pfgap::impute::class_accuracy;
use pfgap::{Error, Result};

/// Minkowski distance of order `p` over fully observed vectors.
#[derive(Debug)]
struct Minkowski {
    p: f64,
}

impl DistanceMeasure for Minkowski {
    fn name(&self) -> &str {
        "minkowski"
    }

    fn accepts(&self, kind: PayloadKind) -> bool {
        kind == PayloadKind::Vector
    }

    fn distance(&self, x: &Instance, y: &Instance) -> Result<f64> {
        let (a, b) = (x.payload.channel(0), y.payload.channel(0));
        if a.len() != b.len() {
            return Err(Error::Data("length mismatch".into()));
        }
        let s: f64 = a.iter().zip(b).map(|(u, v)| (u - v).abs().powf(self.p)).sum();
        Ok(s.powf(1.0 / self.p))
    }
}

fn main() -> Result<()> {
    distance::register(Plugin::new("minkowski", &[PayloadKind::Vector], &["p"], |spec| {
        let p = spec.params.get("p").and_then(|v| v.as_f64()).unwrap_or(1.0);
        if p < 1.0 {
            return Err(Error::Config("minkowski needs p >= 1".into()));
        }
        Ok(Arc::new(Minkowski { p }) as Arc<dyn DistanceMeasure>)
    }))?;
    println!("registered: {}", distance::registered_names().join(", "));

    let (train, test) = train_test_split(&blobs(400, 3, 4, 1.5, 4.0, 0)?, 0.25, true, 0)?;
    for p in [1.0, 2.0, 4.0] {
        let spec = DistanceSpec::new("minkowski").with_param("p", p);
        let forest = fit(&train, &ForestConfig::classification(vec![spec]).with_trees(25))?;
        let acc = class_accuracy(&forest.predict_many(&test.instances)?, &test.targets);
        println!("p = {p}: accuracy {acc:.4}");
    }
    Ok(())
}
