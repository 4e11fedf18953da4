//! Pipeline configuration file (TOML).
//!
//! Every section and field is optional; omitted values take the defaults of
//! the corresponding module. Unknown keys are rejected.
//!
//! ```
//! use segcl::config::PipelineConfig;
//!
//! let cfg = PipelineConfig::from_toml_str(
//!     "[loss]\neta = 0.5\n\n[train]\nmax_epochs = 3\n",
//! )
//! .unwrap();
//! assert_eq!(cfg.loss.eta, 0.5);
//! assert_eq!(cfg.loss.theta, 0.9);
//! assert!(PipelineConfig::from_toml_str("[loss]\netta = 0.5\n").is_err());
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::events::CorpusFormat;
use crate::graph::GraphBuildConfig;
use crate::loss::LossConfig;
use crate::probe::ProbeConfig;
use crate::skeleton::MinerConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub format: CorpusFormat,
    /// Tokens rarer than this across the corpus are dropped before
    /// extraction.
    pub min_freq: usize,
    /// Replaces the built-in stopword list.
    pub stopwords: Option<PathBuf>,
    /// Lowercase words always treated as entities.
    pub entities: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            format: CorpusFormat::LabeledTsv,
            min_freq: 5,
            stopwords: None,
            entities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub graph: GraphBuildConfig,
    pub miner: MinerConfig,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.miner.validate()?;
        self.encoder.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.probe.validate()
    }

    /// The effective configuration, every field spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the effective configuration text.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
