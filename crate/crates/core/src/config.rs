//! Run configuration: endpoints per role, pipeline knobs and the global
//! in-flight request limit. Secrets never live here, only the names of the
//! environment variables holding them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::EndpointConfig;
use crate::error::DatasetError;
use crate::pipeline::PipelineConfig;

/// Editor sampling temperature when the config leaves it unset.
pub const EDITOR_TEMPERATURE: f64 = 0.7;

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub editor: Option<EndpointConfig>,
    #[serde(default)]
    pub guide: Option<EndpointConfig>,
    #[serde(default)]
    pub readers: BTreeMap<String, EndpointConfig>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            editor: None,
            guide: None,
            readers: BTreeMap::new(),
            pipeline: PipelineConfig::default(),
            concurrency: default_concurrency(),
        }
    }
}

impl Config {
    pub fn parse(raw: &str, origin: &Path) -> Result<Self, DatasetError> {
        let parse_err = |message: String| DatasetError::Parse { path: origin.to_path_buf(), location: "config".into(), message };
        let mut value: toml::Table = raw.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        if let Some(toml::Value::Table(editor)) = value.get_mut("editor") {
            editor.entry("temperature").or_insert(toml::Value::Float(EDITOR_TEMPERATURE));
        }
        Config::deserialize(value).map_err(|e| parse_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let raw = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::parse(&raw, path)
    }
}
