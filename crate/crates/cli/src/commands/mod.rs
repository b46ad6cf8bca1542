pub mod estimate;
pub mod frontier;
pub mod pipeline;
pub mod simulate;
pub mod theory;

use std::path::PathBuf;

/// Global options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub outdir: PathBuf,
}

impl Context {
    /// `--seed`, else the seed stored in the loaded configuration, else fresh
    /// entropy. The value is recorded in the manifest either way.
    pub fn seed(&self, loaded: Option<u64>) -> u64 {
        self.seed.or(loaded).unwrap_or_else(rand::random)
    }
}
