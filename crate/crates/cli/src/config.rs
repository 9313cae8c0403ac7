//! Optional TOML defaults. Explicit command-line flags always win.
//!
//! ```toml
//! seed = 7
//! bits = 8
//! psl_tolerance = 5
//! keys = "keys.txt"
//!
//! [train]
//! n_proj = 8
//! learning_rate = 0.001
//! max_epochs = 256
//! realizations = 50
//!
//! [sweep]
//! dims = [4, 8, 16, 32]
//! realizations = 50
//!
//! [bench]
//! sizes = [16, 64, 128, 256, 512, 1024]
//! repetitions = 31
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub bits: Option<usize>,
    pub psl_tolerance: Option<u32>,
    pub keys: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub n_proj: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub max_epochs: Option<u32>,
    pub minibatch: Option<usize>,
    pub init_scale: Option<f64>,
    pub realizations: Option<usize>,
    pub update_order: Option<Vec<anc_core::training::Role>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub dims: Option<Vec<usize>>,
    pub realizations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Option<Vec<usize>>,
    pub repetitions: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow!("parsing {}: {}", path.display(), e.message().trim()))
    }
}
