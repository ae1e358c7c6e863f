//! Experiment configs and the shipped desk-scale presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{CircleConfig, EnvConfig, PPConfig};
use crate::error::{Error, Result};
use crate::learner::TrainConfig;

/// Hex digits of the config hash used in output file names.
pub const HASH_LEN: usize = 12;

pub const PRESETS: [&str; 3] = ["cs-small", "cs-medium", "pp-small"];

/// One experiment: an environment, a training setup and the seeds to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Used when no output directory is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Also write an SVG of the summary curve.
    #[serde(default)]
    pub plot: bool,
    /// Train seeds on worker threads. Results do not depend on it.
    #[serde(default)]
    pub parallel_seeds: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}

/// Fields that determine results; the hash covers exactly these.
#[derive(Serialize)]
struct HashedPart<'a> {
    env: &'a EnvConfig,
    train: &'a TrainConfig,
    seeds: &'a [u64],
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, train: TrainConfig) -> Self {
        Self {
            env,
            train,
            seeds: default_seeds(),
            out_dir: None,
            plot: false,
            parallel_seeds: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.train.validate()?;
        self.env.descriptor()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// A preset name or a path to a JSON config.
    pub fn load(spec: &str) -> Result<Self> {
        if PRESETS.contains(&spec) {
            preset(spec)
        } else {
            Self::read(Path::new(spec))
        }
    }

    /// SHA-256 over the canonical JSON of env, train and seeds, truncated to
    /// `HASH_LEN` hex digits. Output paths and threading do not enter it.
    pub fn hash(&self) -> String {
        let part = HashedPart {
            env: &self.env,
            train: &self.train,
            seeds: &self.seeds,
        };
        let bytes = serde_json::to_vec(&part).expect("config serializes");
        let mut digest = hex::encode(Sha256::digest(&bytes));
        digest.truncate(HASH_LEN);
        digest
    }
}

/// Evaluation episode length for an environment kind.
pub fn default_episode_len(env: &EnvConfig) -> u64 {
    match env {
        EnvConfig::Circles(_) => 2500,
        EnvConfig::PredatorPrey(_) => 175,
        EnvConfig::Tabular(_) | EnvConfig::DelayedReward => 100,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "cs-small" => ExperimentConfig::new(
            EnvConfig::Circles(CircleConfig::new(5, 1, 1, 1)),
            TrainConfig {
                total_steps: 200_000,
                channels: 16,
                episode_len: 2500,
                ..TrainConfig::default()
            },
        ),
        "cs-medium" => ExperimentConfig::new(
            EnvConfig::Circles(CircleConfig::new(20, 1, 3, 5)),
            TrainConfig {
                total_steps: 200_000,
                channels: 32,
                episode_len: 2500,
                ..TrainConfig::default()
            },
        ),
        "pp-small" => ExperimentConfig::new(
            EnvConfig::PredatorPrey(PPConfig {
                grid: 6,
                n: 4,
                u: 4,
                k: 2,
                commands: 5,
            }),
            TrainConfig {
                total_steps: 100_000,
                channels: 16,
                episode_len: 175,
                eval_interval: 10_000,
                ..TrainConfig::default()
            },
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        let cs = preset("cs-small").unwrap();
        let desc = cs.env.descriptor().unwrap();
        assert_eq!((desc.n_items, desc.k_select, desc.n_context, desc.commands), (5, 1, 1, 1));
        assert_eq!((cs.train.total_steps, cs.train.channels), (200_000, 16));
        let pp = preset("pp-small").unwrap().env.descriptor().unwrap();
        assert_eq!((pp.n_items, pp.k_select, pp.n_context), (4, 2, 4));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"env": {"kind": "delayed_reward"}, "trian": {}}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))));
        let nested = r#"{"env": {"kind": "delayed_reward"}, "train": {"stepz": 3}}"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
        let env_key = r#"{"env": {"kind": "circles", "n": 5, "u": 1, "k": 1, "radius": 2}}"#;
        assert!(ExperimentConfig::from_json(env_key).is_err());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"env": {"kind": "delayed_reward"}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3]);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn hash_tracks_results_not_paths() {
        let a = preset("cs-small").unwrap();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        b.parallel_seeds = true;
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![7];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), HASH_LEN);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(preset("cs-huge").is_err());
        let mut cfg = preset("cs-small").unwrap();
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }
}
