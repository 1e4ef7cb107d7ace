use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{TrainConfig, FINAL_MINI_BATCHES};
use crate::fitness::FitnessConfig;
use crate::genetic_ops::GaConfig;
use crate::search_space::SearchSpace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Surrogate,
    Remote,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surrogate" => Ok(Backend::Surrogate),
            "remote" => Ok(Backend::Remote),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub run_log: PathBuf,
    pub cache: PathBuf,
    pub checkpoint: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            run_log: "genas-run.jsonl".into(),
            cache: "genas-cache.tsv".into(),
            checkpoint: "genas-checkpoint.json".into(),
        }
    }
}

/// How to reach trainer workers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Worker program launched once per slot, spoken to over stdio.
    pub command: Option<String>,
    pub args: Vec<String>,
    /// Unix socket of an already running worker; takes precedence over `command`.
    pub socket: Option<PathBuf>,
    /// Base delay of the transient-error backoff, in milliseconds.
    pub retry_delay_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub noise_sd: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { noise_sd: 0.02 }
    }
}

fn default_slots() -> usize {
    1
}

fn default_final_batches() -> u32 {
    FINAL_MINI_BATCHES
}

/// Everything a search run needs. Loaded from TOML; `seed` is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    /// Concurrent evaluations per generation.
    #[serde(default = "default_slots")]
    pub worker_slots: usize,
    #[serde(default = "default_final_batches")]
    pub final_mini_batches: u32,
    #[serde(default)]
    pub space: SearchSpace,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fitness: FitnessConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub remote: RemoteConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    /// Default settings with the given master seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            backend: Backend::Surrogate,
            worker_slots: 1,
            final_mini_batches: FINAL_MINI_BATCHES,
            space: SearchSpace::default(),
            ga: GaConfig::default(),
            train: TrainConfig::default(),
            fitness: FitnessConfig::default(),
            paths: Paths::default(),
            remote: RemoteConfig::default(),
            surrogate: SurrogateConfig::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        self.space.validate().map_err(|e| inv(e.to_string()))?;
        self.ga.validate().map_err(|e| inv(e.to_string()))?;
        self.train.validate().map_err(|e| inv(e.to_string()))?;
        if self.worker_slots < 1 {
            return Err(inv("worker_slots must be >= 1".into()));
        }
        if self.final_mini_batches < 1 {
            return Err(inv("final_mini_batches must be >= 1".into()));
        }
        if !(self.surrogate.noise_sd >= 0.0 && self.surrogate.noise_sd.is_finite()) {
            return Err(inv("surrogate noise_sd must be finite and >= 0".into()));
        }
        if self.backend == Backend::Remote && self.remote.command.is_none() && self.remote.socket.is_none() {
            return Err(inv("remote backend needs remote.command or remote.socket".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = toml::from_str::<RunConfig>("backend = \"surrogate\"\n").unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 3\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.ga.population_size, 30);
        assert_eq!(cfg.ga.generations, 20);
        assert_eq!(cfg.ga.tournament(), 10);
        assert_eq!(cfg.train.mini_batches, 2000);
        assert_eq!(cfg.train.lr, 1e-4);
        assert_eq!(cfg.fitness.window.weights(), &[1.0; 5]);
        assert_eq!(cfg.final_mini_batches, 20_000);
        assert_eq!(cfg.space.max_cells, 50);
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = RunConfig::with_seed(9);
        cfg.ga.population_size = 6;
        cfg.space.input = crate::arch_compiler::Shape::new(32, 32, 1);
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn nested_overrides() {
        let text = "seed = 1\n[ga]\npopulation_size = 9\n[space]\nmax_cells = 4\ninput = [32, 32, 1]\n[fitness]\nwindow = [1.0, 2.0, 1.0]\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.ga.tournament(), 3);
        assert_eq!(cfg.space.max_cells, 4);
        assert_eq!(cfg.space.filter_sizes, vec![1, 3, 5, 7, 11]);
        assert_eq!(cfg.fitness.window.weights(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn remote_needs_an_endpoint() {
        let cfg = RunConfig { backend: Backend::Remote, ..RunConfig::with_seed(1) };
        assert!(cfg.validate().is_err());
    }
}
