//! Settings file support. Precedence: command-line flags, then the settings
//! file (`--config` or `$CHROMAQ_CONFIG`), then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

pub const CONFIG_ENV: &str = "CHROMAQ_CONFIG";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub max_pixels: Option<usize>,
    pub tau: Option<f64>,
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    pub region_k: Option<usize>,
    pub workers: Option<usize>,
    pub groups: Option<usize>,
    pub monk_scale: Option<PathBuf>,
    pub symbols: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading settings file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing settings file {}", path.display()))
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
