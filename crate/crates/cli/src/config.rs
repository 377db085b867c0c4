//! Layered run configuration: profile defaults, then the TOML file, then flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hfur_core::nn::{NetworkConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Sections a config file may carry. Keys mirror the library config fields.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub network: toml::Table,
    #[serde(default)]
    pub train: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Overlays `table` onto `base` field by field; unknown keys are rejected.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, table: &toml::Table, section: &str) -> Result<T> {
    let mut merged = serde_json::to_value(base)?;
    let Value::Object(fields) = &mut merged else { bail!("[{section}] is not a table") };
    for (k, v) in serde_json::to_value(table)?.as_object().into_iter().flatten() {
        fields.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged).with_context(|| format!("invalid [{section}] section"))
}

/// Fully resolved settings of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_replaces_only_given_keys() {
        let table: toml::Table = toml::from_str("channels = 8\nupsampler = \"nearest\"").unwrap();
        let cfg = overlay(&NetworkConfig::test_profile(), &table, "network").unwrap();
        assert_eq!(cfg.channels, 8);
        assert_eq!(cfg.n1, NetworkConfig::test_profile().n1);
        assert_eq!(cfg.upsampler, hfur_core::nn::Upsampler::Nearest);
    }

    #[test]
    fn overlay_rejects_unknown_keys() {
        let table: toml::Table = toml::from_str("chanels = 8").unwrap();
        assert!(overlay(&NetworkConfig::test_profile(), &table, "network").is_err());
    }
}
