pub mod error;
pub mod estimators;
pub mod frontier;
pub mod inference;
pub mod linalg;
pub mod parallel;
pub mod pipeline;
pub mod rmt;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
