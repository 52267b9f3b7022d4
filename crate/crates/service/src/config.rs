//! Service configuration file (TOML).

use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tqk_core::ingest::{load_unified, IngestError};
use tqk_core::QAExample;

/// ```toml
/// store_dir = "tables"
///
/// [[datasets]]
/// name = "demo"
/// split = "dev"
/// path = "demo_dev.jsonl"
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub store_dir: Option<PathBuf>,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub split: String,
    pub path: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("dataset {name}/{split}: {source}")]
    Dataset { name: String, split: String, source: IngestError },
    #[error("dataset {name}/{split} registered twice")]
    Duplicate { name: String, split: String },
}

/// Examples by dataset name, then split.
pub type Datasets = BTreeMap<String, BTreeMap<String, Vec<QAExample>>>;

impl ServiceConfig {
    /// Reads the file; relative paths resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(dir) = &mut cfg.store_dir {
            *dir = base.join(&*dir);
        }
        for d in &mut cfg.datasets {
            d.path = base.join(&d.path);
        }
        Ok(cfg)
    }

    pub fn load_datasets(&self) -> Result<Datasets, ConfigError> {
        let mut out: Datasets = BTreeMap::new();
        for d in &self.datasets {
            let wrap = |source| ConfigError::Dataset { name: d.name.clone(), split: d.split.clone(), source };
            let examples = load_unified(&d.path).map_err(wrap)?.collect::<Result<Vec<_>, _>>().map_err(wrap)?;
            let splits = out.entry(d.name.clone()).or_default();
            if splits.insert(d.split.clone(), examples).is_some() {
                return Err(ConfigError::Duplicate { name: d.name.clone(), split: d.split.clone() });
            }
        }
        Ok(out)
    }
}
