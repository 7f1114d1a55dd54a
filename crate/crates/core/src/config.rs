//! Declarative run configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::model::AnalysisParams;
use crate::simulator::SimConfig;

/// Recodings applied to the first and second stream of a comparison.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelMappings {
    pub a: BTreeMap<String, String>,
    pub b: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub name: String,
    pub reference: String,
    /// Defaults to the sorted distinct values found in the data.
    #[serde(default)]
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressConfig {
    pub factors: Vec<FactorConfig>,
    pub interactions: Vec<[String; 2]>,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub session: Option<PathBuf>,
    pub ethogram: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub params: AnalysisParams,
    pub mapping: LabelMappings,
    pub regress: RegressConfig,
    pub simulator: SimConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Parses a config file; relative paths are taken relative to its directory.
    pub fn from_file_text(text: &str, path: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg = Self::from_toml(text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.session, &mut cfg.ethogram, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
