//! `--config` files: flat TOML whose keys mirror the long flags.
//!
//! ```toml
//! seed = 7
//! mode = "pretrain-then-rl"
//! epochs = 60
//! max_len = 48
//! ```
//!
//! A flag given on the command line wins over the file, and the file wins
//! over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    // gen-data
    pub n: Option<usize>,
    pub sizes: Option<String>,
    // train
    pub mode: Option<String>,
    pub epochs: Option<usize>,
    pub epsilon: Option<f64>,
    pub patience: Option<usize>,
    #[serde(alias = "max_len")]
    pub max_len: Option<usize>,
    pub lr: Option<f64>,
    #[serde(alias = "loose_copy_mask")]
    pub loose_copy_mask: Option<bool>,
    #[serde(alias = "exclude_primary_keys")]
    pub exclude_primary_keys: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
