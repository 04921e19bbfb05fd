//! Optional TOML config file. Every key mirrors a command-line flag; flags win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use contact_sense::stream::DropPolicy;
use serde::Deserialize;

use crate::FeatureMode;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub train: TrainSection,
    pub classify: ClassifySection,
    pub stream: StreamSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub split_ratio: Option<f64>,
    pub n_mels: Option<usize>,
    pub features: Option<FeatureMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    pub tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSection {
    pub sample_rate: Option<u32>,
    pub queue_capacity: Option<usize>,
    pub drop_policy: Option<DropPolicy>,
    pub tau: Option<f64>,
    pub n_mels: Option<usize>,
    pub emphasis: Option<bool>,
    pub full_matrix: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
