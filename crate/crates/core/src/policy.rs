//! Option selection and neighbor selection.
//!
//! Both rules run once per agent per step and read only the agent's state
//! as it stood at the end of the previous step. The UCB neighbor rule also
//! reads the agent's own option choice for the current step, so option
//! selection always precedes neighbor selection.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("gamma must be at least 1.5, got {0}")]
    Gamma(f64),
    #[error("eta must be positive and finite, got {0}")]
    Eta(f64),
    #[error("d² must be positive and finite, got {0}")]
    D2(f64),
}

/// Exploration bonus `Ψ(t) = gamma · d² · sqrt(1 + eta) · ln t`.
///
/// `gamma >= 1.5` keeps `Ψ` above the level needed for the estimator's tail
/// bound. `Ψ(t) = 0` for `t <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    gamma: f64,
    eta: f64,
    d2: f64,
}

impl ExplorationSchedule {
    pub const MIN_GAMMA: f64 = 1.5;

    pub fn new(gamma: f64, eta: f64, d2: f64) -> Result<Self, ScheduleError> {
        if !(gamma >= Self::MIN_GAMMA && gamma.is_finite()) {
            return Err(ScheduleError::Gamma(gamma));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ScheduleError::Eta(eta));
        }
        if !(d2 > 0.0 && d2.is_finite()) {
            return Err(ScheduleError::D2(d2));
        }
        Ok(Self { gamma, eta, d2 })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    #[inline]
    pub fn psi(&self, t: u64) -> f64 {
        if t <= 1 {
            0.0
        } else {
            self.gamma * self.d2 * (1.0 + self.eta).sqrt() * (t as f64).ln()
        }
    }

    /// `ϑ = 1 / ln(1 + eta)`.
    pub fn vartheta(&self) -> f64 {
        1.0 / (1.0 + self.eta).ln()
    }

    /// Pull-count threshold `l(t) = ⌈4 Ψ(t) / Δ²⌉`.
    pub fn threshold(&self, t: u64, gap: f64) -> u64 {
        (4.0 * self.psi(t) / (gap * gap)).ceil() as u64
    }
}

/// UCB index `est + sqrt(psi / count)`; `+∞` when `count == 0`.
#[inline]
pub fn ucb_index(est: f64, count: u64, psi: f64) -> f64 {
    if count == 0 {
        f64::INFINITY
    } else {
        est + (psi / count as f64).sqrt()
    }
}

/// Index of the largest value, ties broken uniformly at random.
///
/// Reservoir-style: the k-th tied maximum replaces the current pick with
/// probability 1/k. No randomness is consumed when the maximum is unique.
pub fn argmax_random_ties<I, R>(values: I, rng: &mut R) -> Option<usize>
where
    I: IntoIterator<Item = f64>,
    R: Rng + ?Sized,
{
    let mut best: Option<(usize, f64)> = None;
    let mut ties = 0u32;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            None => {
                best = Some((i, v));
                ties = 1;
            }
            Some((_, b)) if v > b => {
                best = Some((i, v));
                ties = 1;
            }
            Some((_, b)) if v == b => {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = Some((i, v));
                }
            }
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// UCB option selection for step `t`: argmax over options of
/// `ucb_index(est, count, Ψ(t - 1))`.
pub fn select_option<R: Rng + ?Sized>(
    state: &AgentState,
    t: u64,
    schedule: &ExplorationSchedule,
    rng: &mut R,
) -> usize {
    assert_eq!(
        state.updated_through() + 1,
        t,
        "option selection for step {t} must read the state finalized at step {}",
        t - 1
    );
    let psi = schedule.psi(t - 1);
    let est = state.estimates();
    let count = state.counts();
    argmax_random_ties((0..est.len()).map(|i| ucb_index(est[i], count[i], psi)), rng).expect("at least one option")
}

/// The agents whose step-`t` messages agent `agent` receives. Always
/// contains `agent` itself. Members are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub agent: usize,
    pub members: Vec<usize>,
}

impl NeighborSet {
    fn from_members(agent: usize, mut members: Vec<usize>) -> Self {
        members.push(agent);
        members.sort_unstable();
        members.dedup();
        Self { agent, members }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }

    /// Number of peers, excluding the agent itself.
    pub fn degree(&self) -> usize {
        self.members.len() - 1
    }
}

/// Fixed communication graph given as per-agent neighbor lists, or a named
/// topology resolved at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Adjacency {
    Named(Topology),
    Lists(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Empty,
    Ring,
    Complete,
}

impl Adjacency {
    pub fn resolve(&self, n_agents: usize) -> Vec<Vec<usize>> {
        match self {
            Adjacency::Lists(rows) => rows.clone(),
            Adjacency::Named(Topology::Empty) => vec![Vec::new(); n_agents],
            Adjacency::Named(Topology::Complete) => (0..n_agents)
                .map(|j| (0..n_agents).filter(|&k| k != j).collect())
                .collect(),
            Adjacency::Named(Topology::Ring) => (0..n_agents)
                .map(|j| {
                    let mut row = vec![(j + n_agents - 1) % n_agents, (j + 1) % n_agents];
                    row.sort_unstable();
                    row.dedup();
                    row.retain(|&k| k != j);
                    row
                })
                .collect(),
        }
    }
}

/// Communication policy shared by all agents of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CommPolicy {
    None,
    Fixed {
        adjacency: Adjacency,
    },
    /// Each peer joins independently with probability `p`, fresh every step.
    Er {
        p: f64,
    },
    /// UCB neighbor selection with `budget` peers per step.
    Ucb {
        budget: usize,
    },
}

impl CommPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            CommPolicy::None => "none",
            CommPolicy::Fixed { .. } => "fixed",
            CommPolicy::Er { .. } => "er",
            CommPolicy::Ucb { .. } => "ucb",
        }
    }

    /// Value plotted on the connectivity axis: `p` for ER, the budget for
    /// UCB, 0 otherwise.
    pub fn sweep_value(&self) -> f64 {
        match *self {
            CommPolicy::Er { p } => p,
            CommPolicy::Ucb { budget } => budget as f64,
            _ => 0.0,
        }
    }
}

/// UCB neighbor selection.
///
/// Each peer `k` is scored by its best index over options other than the
/// agent's own current choice, `max_{i != own} est_k[i] + sqrt(Ψ(t-1) / count_k[i])`,
/// using only what `k` reported to this agent. The `budget` best-scoring
/// peers are selected, one slot per peer. Ties, including peers never heard
/// from (infinite score), are resolved uniformly at random.
pub fn select_neighbors_ucb<R: Rng + ?Sized>(
    state: &AgentState,
    own_choice: usize,
    t: u64,
    budget: usize,
    schedule: &ExplorationSchedule,
    rng: &mut R,
) -> NeighborSet {
    let j = state.agent_id();
    let n_agents = state.n_agents();
    if budget == 0 || n_agents <= 1 {
        return NeighborSet::from_members(j, Vec::new());
    }
    let psi = schedule.psi(t - 1);
    let mut scored: Vec<(usize, f64)> = (0..n_agents)
        .filter(|&k| k != j)
        .map(|k| {
            let est = state.peer_estimates(k);
            let count = state.peer_counts(k);
            let score = (0..est.len())
                .filter(|&i| i != own_choice)
                .map(|i| ucb_index(est[i], count[i], psi))
                .fold(f64::NEG_INFINITY, f64::max);
            (k, score)
        })
        .collect();
    // A uniform shuffle followed by a stable sort orders tied peers uniformly.
    scored.shuffle(rng);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let members = scored.iter().take(budget).map(|&(k, _)| k).collect();
    NeighborSet::from_members(j, members)
}

/// Erdős–Rényi neighbor draw: every peer independently with probability `p`.
pub fn select_neighbors_er<R: Rng + ?Sized>(agent: usize, n_agents: usize, p: f64, rng: &mut R) -> NeighborSet {
    let members = (0..n_agents).filter(|&k| k != agent && rng.random_bool(p)).collect();
    NeighborSet::from_members(agent, members)
}

pub fn select_neighbors_fixed(agent: usize, row: &[usize]) -> NeighborSet {
    NeighborSet::from_members(agent, row.to_vec())
}
