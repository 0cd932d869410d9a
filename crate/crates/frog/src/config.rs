//! Simulation configuration: a JSON document with documented defaults.
//!
//! Every key is optional. Unknown keys are rejected so that a typo never silently
//! falls back to a default. `FROG_SEED` and `FROG_OUTPUT` override `seed` and
//! `output` after the file is read.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEED_ENV: &str = "FROG_SEED";
pub const OUTPUT_ENV: &str = "FROG_OUTPUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: invalid configuration")]
    Syntax {
        origin: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{origin}: {message}")]
    Format { origin: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_owned(), message: message.into() }
    }

    pub(crate) fn format(origin: impl fmt::Display, message: impl Into<String>) -> Self {
        ConfigError::Format { origin: origin.to_string(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Rbs,
    Bbs,
    Random,
    Fgreedy,
    Icrowd,
}

impl Policy {
    pub const ALL: [Policy; 5] = [Policy::Rbs, Policy::Bbs, Policy::Random, Policy::Fgreedy, Policy::Icrowd];

    pub fn is_batch(self) -> bool {
        matches!(self, Policy::Bbs | Policy::Fgreedy | Policy::Icrowd)
    }

    /// Label used in reports; iCrowd carries its `k`.
    pub fn label(self, icrowd_k: usize) -> String {
        match self {
            Policy::Rbs => "RBS".into(),
            Policy::Bbs => "BBS".into(),
            Policy::Random => "RANDOM".into(),
            Policy::Fgreedy => "fGreedy".into(),
            Policy::Icrowd => format!("iCrowd-{icrowd_k}"),
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rbs" => Ok(Policy::Rbs),
            "bbs" => Ok(Policy::Bbs),
            "random" => Ok(Policy::Random),
            "fgreedy" => Ok(Policy::Fgreedy),
            "icrowd" => Ok(Policy::Icrowd),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// When tasks enter the system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Arrival {
    /// Every task is present at time zero.
    #[default]
    Batch,
    /// Exponential inter-arrival times with `rate` tasks per second.
    Poisson { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Number of tasks `m`.
    pub tasks: usize,
    /// Number of workers `n`.
    pub workers: usize,
    /// Number of categories `L`.
    pub categories: usize,
    /// Quality thresholds are drawn uniformly from `[lo, hi]`.
    pub quality_range: [f64; 2],
    pub policy: Policy,
    pub icrowd_k: usize,
    /// Batch round length `Δ` in seconds.
    pub round_interval: f64,
    pub skip_probability: f64,
    pub arrival: Arrival,
    /// Simulated seconds after which open tasks are reported as unfinished.
    pub horizon: f64,
    /// Answer choices per task `R`.
    pub choices: usize,
    /// Archetype CSV; the built-in table is used when absent.
    pub archetypes: Option<PathBuf>,
    /// Probability that a worker subscribes to each category.
    pub subscription_fraction: f64,
    /// Blend live agreement with the aggregated results into worker accuracies.
    pub accuracy_refresh: bool,
    pub output: Option<PathBuf>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            tasks: 3000,
            workers: 300,
            categories: 20,
            quality_range: [0.8, 0.85],
            policy: Policy::Bbs,
            icrowd_k: 3,
            round_interval: 30.0,
            skip_probability: 0.0,
            arrival: Arrival::Batch,
            horizon: 604_800.0,
            choices: 2,
            archetypes: None,
            subscription_fraction: 1.0,
            accuracy_refresh: false,
            output: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let [lo, hi] = self.quality_range;
        if !(lo > 0.5 && lo <= hi && hi < 1.0) {
            return Err(ConfigError::invalid(
                "quality_range",
                format!("need 0.5 < lo <= hi < 1, got [{lo}, {hi}]"),
            ));
        }
        if self.categories == 0 {
            return Err(ConfigError::invalid("categories", "must be at least 1"));
        }
        if self.icrowd_k == 0 {
            return Err(ConfigError::invalid("icrowd_k", "must be at least 1"));
        }
        if !(self.round_interval > 0.0 && self.round_interval.is_finite()) {
            return Err(ConfigError::invalid("round_interval", "must be a positive number of seconds"));
        }
        if !(0.0..1.0).contains(&self.skip_probability) {
            return Err(ConfigError::invalid("skip_probability", "must lie in [0, 1)"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", "must be a positive number of seconds"));
        }
        if self.choices < 2 {
            return Err(ConfigError::invalid("choices", "must be at least 2"));
        }
        if !(self.subscription_fraction > 0.0 && self.subscription_fraction <= 1.0) {
            return Err(ConfigError::invalid("subscription_fraction", "must lie in (0, 1]"));
        }
        if let Arrival::Poisson { rate } = self.arrival {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ConfigError::invalid("arrival.poisson.rate", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.policy.label(self.icrowd_k)
    }

    /// Applies `FROG_SEED` / `FROG_OUTPUT` from the given lookup.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(s) = lookup(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| ConfigError::invalid(SEED_ENV, format!("not a 64-bit unsigned integer: {s:?}")))?;
        }
        if let Some(o) = lookup(OUTPUT_ENV) {
            self.output = Some(PathBuf::from(o));
        }
        Ok(())
    }
}

pub fn config_from_str(json: &str, origin: &str) -> Result<SimConfig, ConfigError> {
    let cfg: SimConfig =
        serde_json::from_str(json).map_err(|source| ConfigError::Syntax { origin: origin.to_owned(), source })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, validates and applies environment overrides.
pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    let mut cfg = config_from_str(&text, &path.display().to_string())?;
    cfg.apply_env(|k| std::env::var(k).ok())?;
    Ok(cfg)
}
