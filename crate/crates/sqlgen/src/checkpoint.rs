//! Checkpoint directories: `params.bin`, `vocab.txt` and `manifest.txt`.
//!
//! The manifest is `key=value` lines: format version, layer widths, the
//! SQL vocabulary size, the vocabulary fingerprint, the lexicon and mask
//! switches, and the training configuration under a `train.` prefix.
//! Loading rebuilds the vocabulary from the schema and `vocab.txt` and
//! refuses the checkpoint unless the fingerprint matches.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sqlgen_core::model::{Dims, ModelParams, ParamsDecodeError};
use sqlgen_core::train::TrainConfig;
use sqlgen_core::vocab::LexiconOptions;
use sqlgen_core::{MaskConfig, Schema, Vocabulary};

const FORMAT: u32 = 1;
const PARAMS: &str = "params.bin";
const VOCAB: &str = "vocab.txt";
const MANIFEST: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing or malformed manifest entry `{key}`")]
    Manifest { path: PathBuf, key: String },
    #[error("{path}: unsupported checkpoint format {found}")]
    Format { path: PathBuf, found: String },
    #[error(
        "vocabulary hash mismatch: checkpoint has {expected:016x}, schema and word list give {found:016x}; \
         the checkpoint was trained against a different schema or vocabulary"
    )]
    VocabHash { expected: u64, found: u64 },
    #[error("SQL vocabulary size mismatch: checkpoint has {expected}, schema gives {found}")]
    SqlSize { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Params {
        path: PathBuf,
        source: ParamsDecodeError,
    },
}

/// Everything needed to decode with a trained model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub lexicon: LexiconOptions,
    pub mask: MaskConfig,
    pub max_len: usize,
    /// Training settings as written, `key=value` per line.
    pub config_echo: String,
}

impl Checkpoint {
    pub fn new(params: ModelParams, vocab: Vocabulary, lexicon: LexiconOptions, config: &TrainConfig) -> Self {
        Checkpoint {
            params,
            vocab,
            lexicon,
            mask: config.mask,
            max_len: config.max_len,
            config_echo: config.echo(),
        }
    }

    pub fn manifest(&self) -> String {
        let d = self.params.dims;
        let mut s = format!(
            "format={FORMAT}\nd_e={}\nd_h={}\nd_s={}\nv_sql={}\nvocab_len={}\nvocab_hash={:016x}\n\
             exclude_primary_keys={}\nloose_copy={}\nmax_len={}\n",
            d.embed,
            d.enc_hidden,
            d.dec_hidden,
            self.vocab.sql_len(),
            self.vocab.len(),
            self.vocab.fingerprint(),
            self.lexicon.exclude_primary_keys,
            self.mask.loose_copy,
            self.max_len,
        );
        for line in self.config_echo.lines() {
            s.push_str("train.");
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|source| CheckpointError::Io { path, source })
        };
        fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write(PARAMS, &self.params.to_bytes())?;
        let mut words = self.vocab.words().join("\n");
        if !words.is_empty() {
            words.push('\n');
        }
        write(VOCAB, words.as_bytes())?;
        write(MANIFEST, self.manifest().as_bytes())
    }

    pub fn load(dir: &Path, schema: &Schema) -> Result<Self, CheckpointError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| CheckpointError::Io { path, source })
        };
        let manifest_path = dir.join(MANIFEST);
        let manifest = String::from_utf8_lossy(&read(MANIFEST)?).into_owned();
        let entries: BTreeMap<&str, &str> = manifest.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |key: &str| -> Result<&str, CheckpointError> {
            entries.get(key).copied().ok_or_else(|| CheckpointError::Manifest {
                path: manifest_path.clone(),
                key: key.into(),
            })
        };
        let num = |key: &str| -> Result<usize, CheckpointError> {
            get(key)?.trim().parse().map_err(|_| CheckpointError::Manifest {
                path: manifest_path.clone(),
                key: key.into(),
            })
        };
        let flag = |key: &str| -> Result<bool, CheckpointError> {
            get(key)?.trim().parse().map_err(|_| CheckpointError::Manifest {
                path: manifest_path.clone(),
                key: key.into(),
            })
        };
        let format = get("format")?;
        if format.trim() != FORMAT.to_string() {
            return Err(CheckpointError::Format {
                path: manifest_path.clone(),
                found: format.into(),
            });
        }
        let expected_hash = u64::from_str_radix(get("vocab_hash")?.trim(), 16).map_err(|_| CheckpointError::Manifest {
            path: manifest_path.clone(),
            key: "vocab_hash".into(),
        })?;
        let dims = Dims {
            embed: num("d_e")?,
            enc_hidden: num("d_h")?,
            dec_hidden: num("d_s")?,
        };

        let words = String::from_utf8_lossy(&read(VOCAB)?).into_owned();
        let (vocab, _) = Vocabulary::from_words(schema, words.lines().filter(|w| !w.is_empty()));
        let v_sql = num("v_sql")?;
        if vocab.sql_len() != v_sql {
            return Err(CheckpointError::SqlSize {
                expected: v_sql,
                found: vocab.sql_len(),
            });
        }
        if vocab.fingerprint() != expected_hash {
            return Err(CheckpointError::VocabHash {
                expected: expected_hash,
                found: vocab.fingerprint(),
            });
        }
        let params = ModelParams::from_bytes(&read(PARAMS)?, dims, vocab.len(), vocab.sql_len()).map_err(|source| {
            CheckpointError::Params {
                path: dir.join(PARAMS),
                source,
            }
        })?;
        let config_echo = manifest
            .lines()
            .filter_map(|l| l.strip_prefix("train."))
            .map(|l| format!("{l}\n"))
            .collect();
        Ok(Checkpoint {
            params,
            vocab,
            lexicon: LexiconOptions {
                exclude_primary_keys: flag("exclude_primary_keys")?,
            },
            mask: MaskConfig {
                loose_copy: flag("loose_copy")?,
            },
            max_len: num("max_len")?,
            config_echo,
        })
    }
}
