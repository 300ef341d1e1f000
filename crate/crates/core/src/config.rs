//! File-backed run configuration (TOML).
//!
//! ```toml
//! dataset = "data/train.jsonl"
//! splits = "data/splits.json"   # optional; otherwise split_ratios apply
//! output = "runs/default"
//! split_ratios = [0.8, 0.1, 0.1]
//!
//! [train]
//! lr = 0.0009
//! gamma = 8
//! neighborhood = "cg+dg_filtered"
//!
//! [ablation]
//! gammas = [2, 4, 6, 8, 10]
//! gcn_layers = [1, 2, 3, 4]
//! ```
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::NeighborhoodConfig;
use crate::error::{Error, Result};
use crate::model::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Variants of the neighbourhood axis; defaults to all eight.
    pub neighborhoods: Vec<NeighborhoodConfig>,
    pub gammas: Vec<usize>,
    /// Baseline stack depths of the layers axis (the bilevel row is always
    /// included first).
    pub gcn_layers: Vec<usize>,
    /// Modality subsets such as `"t"` or `"t+v"`.
    pub modalities: Vec<String>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            neighborhoods: NeighborhoodConfig::variants().to_vec(),
            gammas: vec![2, 4, 6, 8, 10],
            gcn_layers: vec![1, 2, 3, 4],
            modalities: ["t", "v", "a", "t+v", "t+a", "v+a", "t+v+a"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub output: PathBuf,
    /// Train/val/test ratios used when no splits file is given.
    pub split_ratios: [f64; 3],
    pub train: TrainConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            splits: None,
            output: PathBuf::from("runs"),
            split_ratios: [0.8, 0.1, 0.1],
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.as_mut().map(resolve);
        cfg.splits.as_mut().map(resolve);
        resolve(&mut cfg.output);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerKind;

    #[test]
    fn defaults_echo_paper_hyperparameters() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.train.lr, 0.0009);
        assert_eq!(cfg.train.dropout, 0.5);
        assert_eq!(cfg.train.rho, 0.3);
        assert_eq!(cfg.train.gamma, 8);
        assert_eq!(cfg.train.max_epochs, 1500);
        assert_eq!(cfg.ablation.neighborhoods.len(), 8);
    }

    #[test]
    fn parses_nested_tables() {
        let cfg = RunConfig::from_toml(
            r#"
            dataset = "d.jsonl"
            [train]
            gamma = 4
            layers = "gcn2"
            neighborhood = "cg+dg"
            modalities = ["t", "a"]
            [ablation]
            gammas = [1, 2]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.train.gamma, 4);
        assert_eq!(cfg.train.layers, LayerKind::Gcn(2));
        assert_eq!(cfg.train.neighborhood.to_string(), "cg+dg");
        assert_eq!(cfg.ablation.gammas, [1, 2]);
        assert_eq!(cfg.train.lr, 0.0009);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("datset = \"x\"").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml("[train]\ngamma = 0").is_err());
        assert!(RunConfig::from_toml("[train]\nneighborhood = \"xg\"").is_err());
        assert!(RunConfig::from_toml("[train]\ndropout = 1.0").is_err());
    }

    #[test]
    fn round_trips_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            dataset: Some("data.jsonl".into()),
            ..Default::default()
        };
        cfg.train.seed = 11;
        let path = dir.path().join("run.toml");
        fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.train, cfg.train);
        assert_eq!(back.dataset.unwrap(), dir.path().join("data.jsonl"));
        assert_eq!(back.output, dir.path().join("runs"));
    }
}
