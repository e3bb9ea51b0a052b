pub mod analyze;
pub mod bench;
pub mod cli;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod forest;
pub mod gap;
pub mod impute;
pub mod meta;

pub use error::{Error, Result};
