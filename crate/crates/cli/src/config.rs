//! Run configuration: defaults, an optional `key = value` file, and
//! command-line `--key value` overrides, with precedence CLI > file >
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use influlocal::model::{DeepInfConfig, Variant};
use influlocal::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let (key, value) = t.split_once('=').ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: format!("expected 'key = value', got '{t}'"),
                })?;
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        for (key, value) in overrides {
            values.insert(key.clone(), value.clone());
        }
        Ok(RunConfig { values })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Validation(format!("config key '{key}' has unparsable value '{v}'"))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Validation(format!(
                "config key '{key}' expects a boolean, got '{v}'"
            ))),
        }
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    pub fn required_path(&self, key: &str, produced_by: &str) -> Result<PathBuf> {
        match self.values.get(key) {
            Some(v) => Ok(PathBuf::from(v)),
            None => Err(Error::Validation(format!(
                "missing required config key '{key}' ({produced_by})"
            ))),
        }
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64_or("seed", 1)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.required_path("out", "choose an output directory")?;
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Model configuration assembled from the flat key space.
    pub fn deepinf(&self) -> Result<DeepInfConfig> {
        let d = DeepInfConfig::default();
        let variant: Variant = self.string_or("variant", "gat").parse()?;
        let config = DeepInfConfig {
            variant,
            layers: self.usize_or("layers", d.layers)?,
            hidden: self.usize_or("hidden", d.hidden)?,
            heads: self.usize_or("heads", d.heads)?,
            n: self.usize_or("n", d.n)?,
            restart: self.f64_or("restart", d.restart)?,
            embed_dim: self.usize_or("embed_dim", d.embed_dim)?,
            use_vertex_features: self.bool_or("use_vertex_features", d.use_vertex_features)?,
            use_instance_norm: self.bool_or("use_instance_norm", d.use_instance_norm)?,
            freeze_embeddings: self.bool_or("freeze_embeddings", d.freeze_embeddings)?,
            lr: self.f64_or("lr", d.lr)?,
            weight_decay: self.f64_or("weight_decay", d.weight_decay)?,
            dropout: self.f64_or("dropout", d.dropout)?,
            batch: self.usize_or("batch", d.batch)?,
            max_epochs: self.usize_or("max_epochs", d.max_epochs)?,
            patience: self.usize_or("patience", d.patience)?,
            instance_norm_eps: self.f64_or("instance_norm_eps", d.instance_norm_eps)?,
            leaky_slope: self.f64_or("leaky_slope", d.leaky_slope)?,
            seed: self.seed()?,
        };
        config.validate()?;
        Ok(config)
    }

    /// All resolved key/value pairs, for manifests.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}
