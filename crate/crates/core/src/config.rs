//! JSON experiment configuration.
//!
//! Every field has a default, so a config file only needs to spell out what
//! it overrides. The schema mirrors the module structure: `scenario` (the
//! buildings, noise phases, and grid tables), `env`, `model`, `trpo`, `fed`,
//! and the experiment matrix settings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvParams;
use crate::policy::ModelConfig;
use crate::scenario::{default_buildings, grid_series, BuildingConfig, GridSeries, NoiseSpec};
use crate::trpo::TrpoConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Buildings, noise phases, and grid tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub buildings: Vec<BuildingConfig>,
    pub train_noise: NoiseSpec,
    pub test_noise: NoiseSpec,
    pub grid: GridSeries,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            buildings: default_buildings(),
            train_noise: NoiseSpec::default_train(),
            test_noise: NoiseSpec::default_test(),
            grid: grid_series(0),
        }
    }
}

/// Federated round settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedConfig {
    pub rounds: u32,
    /// TRPO updates each client runs between aggregations.
    pub local_updates: u32,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self { rounds: 200, local_updates: 1 }
    }
}

/// Top-level configuration for training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub env: EnvParams,
    pub model: ModelConfig,
    pub trpo: TrpoConfig,
    pub fed: FedConfig,
    pub seeds: Vec<u64>,
    /// Evaluate on the test distribution every this many rounds.
    pub eval_every: u32,
    /// Test episodes averaged per evaluation point.
    pub eval_episodes: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            env: EnvParams::default(),
            model: ModelConfig::default(),
            trpo: TrpoConfig::default(),
            fed: FedConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            eval_every: 10,
            eval_episodes: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.scenario.buildings.is_empty() {
            return invalid("at least one building required".into());
        }
        for b in &self.scenario.buildings {
            b.validate().map_err(ConfigError::Invalid)?;
        }
        for (i, a) in self.scenario.buildings.iter().enumerate() {
            for b in &self.scenario.buildings[i + 1..] {
                if a == b {
                    return invalid(format!(
                        "buildings {} and {} are identical in every field",
                        a.building_id, b.building_id
                    ));
                }
            }
        }
        self.scenario.train_noise.validate().map_err(ConfigError::Invalid)?;
        self.scenario.test_noise.validate().map_err(ConfigError::Invalid)?;
        if self.scenario.train_noise.temp_noise_range == self.scenario.test_noise.temp_noise_range
            && self.scenario.train_noise.humidity_noise_range
                == self.scenario.test_noise.humidity_noise_range
        {
            return invalid("train and test noise ranges must differ".into());
        }
        self.scenario.grid.validate().map_err(ConfigError::Invalid)?;
        if self.seeds.is_empty() {
            return invalid("seeds must be non-empty".into());
        }
        if self.fed.rounds == 0 {
            return invalid("rounds must be > 0".into());
        }
        if self.eval_every == 0 || self.eval_every > self.fed.rounds {
            return invalid(format!(
                "eval_every must be in [1, rounds]; got {} with rounds {}",
                self.eval_every, self.fed.rounds
            ));
        }
        if self.eval_episodes == 0 {
            return invalid("eval_episodes must be > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let config = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let config: ExperimentConfig =
            serde_json::from_str(r#"{"fed": {"rounds": 7}, "seeds": [9]}"#).unwrap();
        assert_eq!(config.fed.rounds, 7);
        assert_eq!(config.fed.local_updates, 1);
        assert_eq!(config.seeds, vec![9]);
        assert_eq!(config.scenario.buildings.len(), 5);

        // partial nested sections keep the remaining fields too
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"trpo": {"batch_episodes": 2}, "env": {"penalty_weight": 0.2}}"#,
        )
        .unwrap();
        assert_eq!(config.trpo.batch_episodes, 2);
        assert_eq!(config.trpo.cg_iters, 10);
        assert_eq!(config.env.penalty_weight, 0.2);
        assert_eq!(config.env.initial_soc_frac, 0.5);
    }

    #[test]
    fn invalid_eval_cadence_is_rejected() {
        let mut config = ExperimentConfig::default();
        config.fed.rounds = 5;
        config.eval_every = 10;
        assert!(config.validate().is_err());
    }

    #[test]
    fn identical_noise_phases_are_rejected() {
        let mut config = ExperimentConfig::default();
        config.scenario.test_noise.temp_noise_range =
            config.scenario.train_noise.temp_noise_range;
        config.scenario.test_noise.humidity_noise_range =
            config.scenario.train_noise.humidity_noise_range;
        assert!(config.validate().is_err());
    }

    #[test]
    fn file_loading_reports_missing_path() {
        let err = ExperimentConfig::from_json_file(Path::new("/nonexistent/config.json"));
        assert!(matches!(err, Err(ConfigError::Io { .. })));
    }
}
