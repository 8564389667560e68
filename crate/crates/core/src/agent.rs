//! Per-agent knowledge.
//!
//! An agent keeps, for every option, the mean of every distinct reward it
//! has become aware of (its own pull plus whatever its neighbors reported)
//! together with the number of such awareness events. It also keeps, for
//! every peer, the mean and count of what that peer reported directly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prior belief used to seed each option's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Prior {
    Point { value: f64 },
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Normal { mean: 0.0, std: 1.0 }
    }
}

impl Prior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Point { value } => value,
            Prior::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            Prior::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Prior::Point { value } => value.is_finite(),
            Prior::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Prior::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
        }
    }
}

/// A message received by an agent: `source` pulled `option` and got `reward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub source: usize,
    pub option: usize,
    pub reward: f64,
}

/// Everything an agent learns during one step, its own pull included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub step: u64,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UpdateError {
    #[error("batch for step {got} delivered to agent {agent} expecting step {expected}")]
    OutOfOrder { agent: usize, expected: u64, got: u64 },
    #[error("option {option} reported with two rewards ({first} and {second}) in one step")]
    ConflictingRewards { option: usize, first: f64, second: f64 },
    #[error("source {0} appears twice in one batch")]
    DuplicateSource(usize),
    #[error("observation references option {option} or source {peer} out of range")]
    OutOfRange { peer: usize, option: usize },
}

/// Awareness indicators: `true` at every option named by at least one
/// observation in the batch. Multiple reports of one option collapse to a
/// single event.
pub fn compute_awareness(batch: &ObservationBatch, n_options: usize) -> Vec<bool> {
    let mut aware = vec![false; n_options];
    for obs in &batch.observations {
        if let Some(a) = aware.get_mut(obs.option) {
            *a = true;
        }
    }
    aware
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    agent_id: usize,
    n_options: usize,
    n_agents: usize,
    pub(crate) est: Vec<f64>,
    pub(crate) count: Vec<u64>,
    /// Row-major `[peer][option]`.
    peer_est: Vec<f64>,
    peer_count: Vec<u64>,
    last_choice: Option<usize>,
    pub(crate) updated_through: u64,
}

/// Serializable view used for trace dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent_id: usize,
    pub est: Vec<f64>,
    pub count: Vec<u64>,
}

/// Initial state: every option's estimate is one draw from the prior and
/// counts as a single pseudo-observation, so UCB indices are finite from
/// the first step. Peer statistics start empty.
pub fn init_agent<R: Rng + ?Sized>(
    agent_id: usize,
    n_options: usize,
    n_agents: usize,
    prior: &Prior,
    rng: &mut R,
) -> AgentState {
    AgentState {
        agent_id,
        n_options,
        n_agents,
        est: (0..n_options).map(|_| prior.sample(rng)).collect(),
        count: vec![1; n_options],
        peer_est: vec![0.0; n_agents * n_options],
        peer_count: vec![0; n_agents * n_options],
        last_choice: None,
        updated_through: 0,
    }
}

impl AgentState {
    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn estimates(&self) -> &[f64] {
        &self.est
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    pub fn peer_estimates(&self, peer: usize) -> &[f64] {
        &self.peer_est[peer * self.n_options..(peer + 1) * self.n_options]
    }

    pub fn peer_counts(&self, peer: usize) -> &[u64] {
        &self.peer_count[peer * self.n_options..(peer + 1) * self.n_options]
    }

    pub fn last_choice(&self) -> Option<usize> {
        self.last_choice
    }

    /// Last step whose observations have been absorbed (0 before step 1).
    pub fn updated_through(&self) -> u64 {
        self.updated_through
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            agent_id: self.agent_id,
            est: self.est.clone(),
            count: self.count.clone(),
        }
    }

    /// Absorbs one step's observations.
    ///
    /// Each option named in the batch adds one awareness event and its
    /// shared reward once, however many sources reported it. Reports from
    /// peers additionally feed the per-peer statistics. The batch is checked
    /// in full before any state changes.
    pub fn update(&mut self, batch: &ObservationBatch) -> Result<(), UpdateError> {
        let expected = self.updated_through + 1;
        if batch.step != expected {
            return Err(UpdateError::OutOfOrder {
                agent: self.agent_id,
                expected,
                got: batch.step,
            });
        }

        let mut value: Vec<Option<f64>> = vec![None; self.n_options];
        let mut seen_source = vec![false; self.n_agents];
        for obs in &batch.observations {
            if obs.option >= self.n_options || obs.source >= self.n_agents {
                return Err(UpdateError::OutOfRange {
                    peer: obs.source,
                    option: obs.option,
                });
            }
            if std::mem::replace(&mut seen_source[obs.source], true) {
                return Err(UpdateError::DuplicateSource(obs.source));
            }
            match value[obs.option] {
                Some(first) if first != obs.reward => {
                    return Err(UpdateError::ConflictingRewards {
                        option: obs.option,
                        first,
                        second: obs.reward,
                    })
                }
                Some(_) => {}
                None => value[obs.option] = Some(obs.reward),
            }
        }

        for (i, v) in value.iter().enumerate() {
            if let Some(x) = *v {
                self.count[i] += 1;
                self.est[i] += (x - self.est[i]) / self.count[i] as f64;
            }
        }
        for obs in &batch.observations {
            if obs.source == self.agent_id {
                self.last_choice = Some(obs.option);
            } else {
                let idx = obs.source * self.n_options + obs.option;
                self.peer_count[idx] += 1;
                self.peer_est[idx] += (obs.reward - self.peer_est[idx]) / self.peer_count[idx] as f64;
            }
        }
        self.updated_through = batch.step;
        Ok(())
    }
}
