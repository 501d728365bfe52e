//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Track {
    #[default]
    Clean,
    #[serde(alias = "real-world")]
    Real,
}

impl std::fmt::Display for Track {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Track::Clean => "clean",
            Track::Real => "real",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `rgb/` and `cubes/`.
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    /// Skip pairs that fail to load instead of aborting.
    pub skip_unreadable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub track: Track,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Frozen loss-network checkpoint; seeded random weights when unset.
    pub loss_network: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            track: Track::Clean,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss_network: None,
            seed: 0,
            threads: 1,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates; relative dataset paths resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.train);
        if let Some(v) = cfg.data.val.as_mut() {
            resolve(v);
        }
        if let Some(l) = cfg.loss_network.as_mut() {
            resolve(l);
        }
        resolve(&mut cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        if self.data.train.as_os_str().is_empty() {
            return Err(Error::Config("data.train is required".into()));
        }
        must_exist(&self.data.train, "training root")?;
        if let Some(v) = &self.data.val {
            must_exist(v, "validation root")?;
        }
        if let Some(l) = &self.loss_network {
            must_exist(l, "loss network checkpoint")?;
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_document() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            track = "real-world"
            [data]
            train = "data/train"
            [model]
            encoder_depth = 18
            width_multiplier = 0.125
            [train]
            epochs = 3
            batch_size = 2
            crop = 64
            [train.loss]
            alpha = [1.0, 1.0, 1.0]
            beta = [0.0, 0.0, 0.0]
            gamma = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.track, Track::Real);
        assert_eq!(cfg.model.encoder_depth, crate::model::EncoderDepth::D18);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.loss.beta, [0.0; 3]);
    }

    #[test]
    fn rejects_bad_depth_and_unknown_keys() {
        assert!(RunConfig::from_toml("[model]\nencoder_depth = 101").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
