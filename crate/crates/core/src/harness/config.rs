//! Experiment configuration: scheme selection, schedules and overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{PhaseSchedule, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::mdp::RewardKind;
use crate::td3::Td3Hyper;
use crate::transfer::{TransferScheme, DEFAULT_OFFLINE_EPOCHS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BlCen,
    BlDist,
    BlHeur,
    Dirp,
    Gen,
    Spec,
    SpecInstance,
    SpecModel,
    TlDirp,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::BlCen,
        Scheme::BlDist,
        Scheme::BlHeur,
        Scheme::Dirp,
        Scheme::Gen,
        Scheme::Spec,
        Scheme::SpecInstance,
        Scheme::SpecModel,
        Scheme::TlDirp,
    ];

    pub fn transfer(self) -> Option<TransferScheme> {
        match self {
            Scheme::Gen => Some(TransferScheme::GenOnly),
            Scheme::Spec => Some(TransferScheme::SpecFull),
            Scheme::SpecInstance => Some(TransferScheme::SpecInstanceOnly),
            Scheme::SpecModel => Some(TransferScheme::SpecModelOnly),
            Scheme::TlDirp => Some(TransferScheme::TlDirp),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::BlCen => "bl-cen",
            Scheme::BlDist => "bl-dist",
            Scheme::BlHeur => "bl-heur",
            Scheme::Dirp => "dirp",
            Scheme::Gen => "gen",
            Scheme::Spec => "spec",
            Scheme::SpecInstance => "spec-instance",
            Scheme::SpecModel => "spec-model",
            Scheme::TlDirp => "tl-dirp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_output() -> PathBuf {
    PathBuf::from("runs")
}
fn default_central_exploration() -> usize {
    500
}
fn default_capacity() -> usize {
    DEFAULT_CAPACITY
}
fn default_offline_epochs() -> usize {
    DEFAULT_OFFLINE_EPOCHS
}
fn default_true() -> bool {
    true
}

/// One experiment: a scheme run under several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `"default"`, `"small"` or a scenario TOML path (relative to the
    /// config file).
    pub scenario: String,
    pub scheme: Scheme,
    pub reward: RewardKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub schedule: PhaseSchedule,
    /// Exploration length for the centralized baseline.
    #[serde(default = "default_central_exploration")]
    pub central_exploration: usize,
    /// Generalist period of the transfer schemes; defaults to the main
    /// schedule without its evaluation period.
    #[serde(default)]
    pub generalist: Option<PhaseSchedule>,
    #[serde(default)]
    pub td3: Td3Hyper,
    #[serde(default = "default_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "default_offline_epochs")]
    pub offline_epochs: usize,
    #[serde(default = "default_true")]
    pub write_checkpoints: bool,
}

impl ExperimentConfig {
    pub fn new(scenario: &str, scheme: Scheme, reward: RewardKind) -> Self {
        ExperimentConfig {
            scenario: scenario.into(),
            scheme,
            reward,
            seeds: default_seeds(),
            output: default_output(),
            schedule: PhaseSchedule::default(),
            central_exploration: default_central_exploration(),
            generalist: None,
            td3: Td3Hyper::default(),
            replay_capacity: default_capacity(),
            offline_epochs: default_offline_epochs(),
            write_checkpoints: true,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::parse("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.schedule.train == 0 || self.schedule.eval == 0 {
            return Err(Error::Config(
                "train and eval phases must be positive".into(),
            ));
        }
        self.schedule.validate()?;
        if let Some(g) = &self.generalist {
            g.validate()?;
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("replay_capacity must be positive".into()));
        }
        self.td3.validate()
    }

    pub fn generalist_schedule(&self) -> PhaseSchedule {
        self.generalist.unwrap_or(PhaseSchedule {
            eval: 0,
            ..self.schedule
        })
    }

    pub fn central_schedule(&self) -> PhaseSchedule {
        PhaseSchedule {
            exploration: self.central_exploration,
            ..self.schedule
        }
    }
}
