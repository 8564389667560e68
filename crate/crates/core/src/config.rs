//! Experiment files and presets.
//!
//! An experiment file is TOML: the [`SimConfig`] fields at top level, an
//! optional `name`, and any number of `[[sweep]]` tables. Each sweep runs
//! the base configuration once per value with the communication policy
//! replaced (`policy = "er"` sweeps `p`, `policy = "ucb"` sweeps the
//! neighbor budget). Without sweeps the base configuration runs once.
//!
//! ```toml
//! name = "example"
//! n_agents = 5
//! n_options = 10
//! horizon = 10000
//! trials = 20
//! seed = 1
//!
//! [rewards]
//! kind = "gaussian"
//! sigma2 = 2.0
//! top = 9.0
//! spacing = 1.0
//!
//! [comm]
//! kind = "er"
//! p = 0.2
//!
//! [[sweep]]
//! policy = "er"
//! values = [0.0, 0.1, 0.3]
//! ```
//!
//! A run manifest (JSON) is also accepted; its `experiment` entry is read.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Prior;
use crate::engine::{ExplorationSpec, InvalidConfig, RewardSpec, SimConfig};
use crate::policy::CommPolicy;

/// Version of the experiment file layout, recorded in run manifests.
pub const CONFIG_FORMAT: &str = "dmamab-experiment/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{}`: {}", .0.field, .0.message)]
    Invalid(#[from] InvalidConfig),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPolicy {
    Er,
    Ucb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub policy: SweepPolicy,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn er(values: &[f64]) -> Self {
        Self {
            policy: SweepPolicy::Er,
            values: values.to_vec(),
        }
    }

    pub fn ucb(values: &[usize]) -> Self {
        Self {
            policy: SweepPolicy::Ucb,
            values: values.iter().map(|&v| v as f64).collect(),
        }
    }

    fn policy_for(&self, value: f64) -> CommPolicy {
        match self.policy {
            SweepPolicy::Er => CommPolicy::Er { p: value },
            SweepPolicy::Ucb => CommPolicy::Ucb { budget: value as usize },
        }
    }
}

/// A base configuration plus optional sweeps over communication policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SimConfig,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
}

impl ExperimentSpec {
    /// Every configuration the experiment runs, in output order.
    pub fn runs(&self) -> Vec<SimConfig> {
        if self.sweeps.is_empty() {
            return vec![self.base.clone()];
        }
        self.sweeps
            .iter()
            .flat_map(|s| s.values.iter().map(move |&v| self.base.with_comm(s.policy_for(v))))
            .collect()
    }

    pub fn validate(&self) -> Result<(), InvalidConfig> {
        self.base.validate()?;
        for (si, sweep) in self.sweeps.iter().enumerate() {
            for (vi, &v) in sweep.values.iter().enumerate() {
                let field = format!("sweep[{si}].values[{vi}]");
                let ok = match sweep.policy {
                    SweepPolicy::Er => (0.0..=1.0).contains(&v),
                    SweepPolicy::Ucb => v >= 0.0 && v.fract() == 0.0 && v <= (self.base.n_agents - 1) as f64,
                };
                if !ok {
                    let message = match sweep.policy {
                        SweepPolicy::Er => format!("edge probability must lie in [0, 1], got {v}"),
                        SweepPolicy::Ucb => {
                            format!("budget must be an integer in [0, {}], got {v}", self.base.n_agents - 1)
                        }
                    };
                    return Err(InvalidConfig { field, message });
                }
            }
        }
        for run in self.runs() {
            run.validate()?;
        }
        Ok(())
    }

    /// Replaces trial count and/or master seed.
    pub fn with_overrides(mut self, trials: Option<usize>, seed: Option<u64>) -> Self {
        if let Some(t) = trials {
            self.base.trials = t;
        }
        if let Some(s) = seed {
            self.base.seed = s;
        }
        self
    }
}

fn parse_error(path: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    }
}

/// Parses TOML experiment text.
pub fn parse_toml(text: &str, origin: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
    let name = match table.remove("name") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(parse_error(origin, "`name` must be a string")),
        None => "custom".to_string(),
    };
    let sweeps = match table.remove("sweep") {
        Some(v) => serde_path_to_error::deserialize::<_, Vec<Sweep>>(v)
            .map_err(|e| parse_error(origin, format!("sweep{}: {}", e.path(), e.inner())))?,
        None => Vec::new(),
    };
    let base: SimConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| parse_error(origin, format!("{}: {}", e.path(), e.inner())))?;
    let spec = ExperimentSpec { name, base, sweeps };
    spec.validate()?;
    Ok(spec)
}

/// Parses experiment JSON: either a bare [`ExperimentSpec`] or a manifest
/// carrying one under `experiment`.
pub fn parse_json(text: &str, origin: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
    if let Some(inner) = value.get_mut("experiment") {
        value = inner.take();
    }
    let spec: ExperimentSpec = serde_path_to_error::deserialize(value)
        .map_err(|e| parse_error(origin, format!("{}: {}", e.path(), e.inner())))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads and validates an experiment file (`.json` as JSON, anything else
/// as TOML).
pub fn parse_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: origin.clone(),
        source,
    })?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_json(&text, &origin)
    } else {
        parse_toml(&text, &origin)
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    (
        "full",
        "20 agents, 100 options, T = 20000, 4 trials; ER and UCB-communication sweeps",
    ),
    ("full-er", "full scale, ER sweep p ∈ {0, 1, 2, 4, 8, 16}/19"),
    ("full-ucb", "full scale, UCB-communication sweep n_j ∈ {1, 2, 4, 8, 16}"),
    ("full-nocomm", "full scale, no communication"),
    (
        "desk",
        "5 agents, 10 options, T = 10000, 20 trials; ER and UCB-communication sweeps",
    ),
    ("desk-er", "desk scale, ER sweep p ∈ {0, 0.1, 0.3, 0.6, 1}"),
    ("desk-ucb", "desk scale, UCB-communication sweep n_j ∈ {2, 4}"),
    ("desk-nocomm", "desk scale, no communication"),
];

const FULL_SEED: u64 = 20_000;
const DESK_SEED: u64 = 10_000;

/// One reward-like draw centered on the mean range. A prior far below the
/// rewards hides the best option until sqrt(Ψ(t)) covers the distance.
fn reward_scale_prior(center: f64, sigma2: f64) -> Prior {
    Prior::Normal {
        mean: center,
        std: sigma2.sqrt(),
    }
}

fn full_base() -> SimConfig {
    SimConfig {
        n_agents: 20,
        n_options: 100,
        horizon: 20_000,
        trials: 4,
        seed: FULL_SEED,
        // Means evenly spaced on [0, 9.9].
        rewards: RewardSpec::gaussian_evenly_spaced(2.0, 9.9, 0.1),
        exploration: ExplorationSpec::default(),
        prior: reward_scale_prior(4.95, 2.0),
        comm: CommPolicy::None,
    }
}

fn desk_base() -> SimConfig {
    SimConfig {
        n_agents: 5,
        n_options: 10,
        horizon: 10_000,
        trials: 20,
        seed: DESK_SEED,
        rewards: RewardSpec::gaussian_evenly_spaced(2.0, 9.0, 1.0),
        exploration: ExplorationSpec::default(),
        prior: reward_scale_prior(4.5, 2.0),
        comm: CommPolicy::None,
    }
}

fn full_er_sweep() -> Sweep {
    let peers = 19.0;
    Sweep::er(&[0.0, 1.0 / peers, 2.0 / peers, 4.0 / peers, 8.0 / peers, 16.0 / peers])
}

fn desk_er_sweep() -> Sweep {
    Sweep::er(&[0.0, 0.1, 0.3, 0.6, 1.0])
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ExperimentSpec, ConfigError> {
    let (base, sweeps) = match name {
        "full" => (full_base(), vec![full_er_sweep(), Sweep::ucb(&[1, 2, 4, 8, 16])]),
        "full-er" => (full_base(), vec![full_er_sweep()]),
        "full-ucb" => (full_base(), vec![Sweep::ucb(&[1, 2, 4, 8, 16])]),
        "full-nocomm" => (full_base(), Vec::new()),
        "desk" => (desk_base(), vec![desk_er_sweep(), Sweep::ucb(&[2, 4])]),
        "desk-er" => (desk_base(), vec![desk_er_sweep()]),
        "desk-ucb" => (desk_base(), vec![Sweep::ucb(&[2, 4])]),
        "desk-nocomm" => (desk_base(), Vec::new()),
        _ => return Err(ConfigError::UnknownPreset(name.to_string())),
    };
    Ok(ExperimentSpec {
        name: name.to_string(),
        base,
        sweeps,
    })
}

/// Shrinks an experiment to desk dimensions (5 agents, 10 options with unit
/// gaps, T = 10000, 20 trials). Sweeps keep their policy family and take the
/// desk sweep values.
pub fn desk_scale(spec: ExperimentSpec) -> ExperimentSpec {
    let base = SimConfig {
        comm: match spec.base.comm {
            CommPolicy::Ucb { budget } => CommPolicy::Ucb { budget: budget.min(4) },
            CommPolicy::Fixed { .. } => CommPolicy::None,
            other => other,
        },
        ..desk_base()
    };
    let sweeps = spec
        .sweeps
        .iter()
        .map(|s| match s.policy {
            SweepPolicy::Er => desk_er_sweep(),
            SweepPolicy::Ucb => Sweep::ucb(&[2, 4]),
        })
        .collect();
    let name = match spec.name.strip_prefix("full") {
        Some(rest) => format!("desk{rest}"),
        None => format!("{}-desk", spec.name),
    };
    ExperimentSpec { name, base, sweeps }
}
