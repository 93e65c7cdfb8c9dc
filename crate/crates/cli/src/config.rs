//! Optional key-value config file. Precedence everywhere is
//! flags > environment > file > built-in defaults; flags and environment are
//! resolved by the argument parser, the file fills whatever is still unset.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

pub const DEFAULT_BOUNDARY_W: f64 = 140.0;
pub const DEFAULT_BOUNDARY_D: f64 = 70.0;
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub cassette: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tau: Option<f64>,
    pub policy: Option<String>,
    pub endpoint: Option<String>,
    pub boundary_width: Option<f64>,
    pub boundary_depth: Option<f64>,
    pub population: Option<usize>,
    pub generations: Option<u32>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config error in {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys_and_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "seed = 9\nmode = \"replay\"\nboundary_width = 120.0\n").unwrap();
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.mode.as_deref(), Some("replay"));
        assert_eq!(cfg.boundary_width, Some(120.0));

        std::fs::write(&path, "sede = 9\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
    }
}
