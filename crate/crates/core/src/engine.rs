//! Simulation loop.
//!
//! Every step runs the same phase sequence:
//!
//! 1. every agent picks an option from its state at the end of step `t - 1`;
//! 2. every agent picks its neighbor set (the UCB rule also sees the agent's
//!    own choice from phase 1);
//! 3. one reward per option is drawn for step `t`;
//! 4. each agent receives `(k, choice_k, reward)` from every `k` in its
//!    neighbor set, itself included;
//! 5. the ledger records the step against pre-update counts and the agents
//!    absorb their batches.
//!
//! Agents are processed in id order within each phase. All phase 1 and 2
//! decisions are made before any state changes, so processing order does not
//! leak same-step information.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    compute_awareness, init_agent, AgentSnapshot, AgentState, Observation, ObservationBatch, Prior, UpdateError,
};
use crate::metrics::{comm_prefactor, theorem1_bound, BoundCheck, LedgerError, RegretKind, RegretLedger};
use crate::policy::{
    select_neighbors_er, select_neighbors_fixed, select_neighbors_ucb, select_option, Adjacency, CommPolicy,
    ExplorationSchedule, NeighborSet,
};
use crate::reward::{MeanSchedule, ModelViolation, Noise, RewardModel};
use crate::rng::TrialStreams;
use crate::stats::mean_se;

/// A configuration field that failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct InvalidConfig {
    pub field: String,
    pub message: String,
}

impl InvalidConfig {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] InvalidConfig),
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Bounded,
}

/// Reward model as written in a config file.
///
/// Means come from exactly one of: `means` (explicit, stationary),
/// `start` + `end` (linear drift over the horizon), or `top` + `spacing`
/// (evenly spaced, descending). Without any of them the means are
/// `n_options - 1, ..., 1, 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    /// Gaussian variance (default 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Interval length for bounded rewards (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Vec<f64>>,
    /// Overrides the sub-Gaussian scale `d²` derived from the noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<f64>,
}

impl RewardSpec {
    pub const DEFAULT_SIGMA2: f64 = 2.0;
    pub const DEFAULT_INTERVAL: f64 = 1.0;

    pub fn gaussian_evenly_spaced(sigma2: f64, top: f64, spacing: f64) -> Self {
        Self {
            sigma2: Some(sigma2),
            top: Some(top),
            spacing: Some(spacing),
            ..Self::default()
        }
    }

    fn noise(&self) -> Noise {
        match self.kind {
            NoiseKind::Gaussian => Noise::Gaussian {
                sigma2: self.sigma2.unwrap_or(Self::DEFAULT_SIGMA2),
            },
            NoiseKind::Bounded => Noise::Bounded {
                interval: self.interval.unwrap_or(Self::DEFAULT_INTERVAL),
            },
        }
    }

    fn schedule(&self, n_options: usize, horizon: u64) -> Result<MeanSchedule, InvalidConfig> {
        let explicit = self.means.is_some();
        let linear = self.start.is_some() || self.end.is_some();
        let spaced = self.top.is_some() || self.spacing.is_some();
        if [explicit, linear, spaced].iter().filter(|&&b| b).count() > 1 {
            return Err(InvalidConfig::new(
                "rewards",
                "use only one of `means`, `start`/`end`, or `top`/`spacing`",
            ));
        }
        let check_len = |field: &str, v: &[f64]| {
            if v.len() == n_options {
                Ok(())
            } else {
                Err(InvalidConfig::new(
                    field,
                    format!("expected {n_options} values, got {}", v.len()),
                ))
            }
        };
        if let Some(m) = &self.means {
            check_len("rewards.means", m)?;
            return Ok(MeanSchedule::Constant(m.clone()));
        }
        if linear {
            let start = self
                .start
                .as_ref()
                .ok_or_else(|| InvalidConfig::new("rewards.start", "required together with `end`"))?;
            let end = self
                .end
                .as_ref()
                .ok_or_else(|| InvalidConfig::new("rewards.end", "required together with `start`"))?;
            check_len("rewards.start", start)?;
            check_len("rewards.end", end)?;
            return Ok(MeanSchedule::Linear {
                start: start.clone(),
                end: end.clone(),
                horizon,
            });
        }
        let spacing = self.spacing.unwrap_or(1.0);
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(InvalidConfig::new("rewards.spacing", "must be positive"));
        }
        let top = self.top.unwrap_or(spacing * n_options.saturating_sub(1) as f64);
        Ok(MeanSchedule::evenly_spaced(n_options, top, spacing))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationSpec {
    #[serde(default = "ExplorationSpec::default_gamma")]
    pub gamma: f64,
    #[serde(default = "ExplorationSpec::default_eta")]
    pub eta: f64,
}

impl ExplorationSpec {
    fn default_gamma() -> f64 {
        1.5
    }

    fn default_eta() -> f64 {
        0.1
    }
}

impl Default for ExplorationSpec {
    fn default() -> Self {
        Self {
            gamma: Self::default_gamma(),
            eta: Self::default_eta(),
        }
    }
}

fn default_trials() -> usize {
    1
}

fn default_comm() -> CommPolicy {
    CommPolicy::None
}

/// Full parameterization of one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_options: usize,
    #[serde(alias = "T")]
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rewards: RewardSpec,
    #[serde(default)]
    pub exploration: ExplorationSpec,
    #[serde(default)]
    pub prior: Prior,
    #[serde(default = "default_comm")]
    pub comm: CommPolicy,
}

/// Validated, ready-to-run form of a [`SimConfig`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: RewardModel,
    pub schedule: ExplorationSchedule,
    adjacency: Option<Vec<Vec<usize>>>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        self.prepare().map(|_| ())
    }

    pub fn prepare(&self) -> Result<Prepared, InvalidConfig> {
        if self.n_agents == 0 {
            return Err(InvalidConfig::new("n_agents", "must be positive"));
        }
        if self.n_options == 0 {
            return Err(InvalidConfig::new("n_options", "must be positive"));
        }
        if self.horizon < 2 {
            return Err(InvalidConfig::new("horizon", "must be at least 2"));
        }
        if self.trials == 0 {
            return Err(InvalidConfig::new("trials", "must be positive"));
        }
        if !self.prior.is_valid() {
            return Err(InvalidConfig::new(
                "prior",
                "parameters must be finite (std >= 0, low <= high)",
            ));
        }

        let schedule = self.rewards.schedule(self.n_options, self.horizon)?;
        let mut model = RewardModel::new(schedule, self.rewards.noise(), self.horizon).map_err(|e| {
            let field = match e {
                ModelViolation::InvalidNoise(_) => match self.rewards.kind {
                    NoiseKind::Gaussian => "rewards.sigma2",
                    NoiseKind::Bounded => "rewards.interval",
                },
                _ => "rewards",
            };
            InvalidConfig::new(field, e.to_string())
        })?;
        if let Some(d2) = self.rewards.d2 {
            model = model
                .with_sub_gaussian_d2(d2)
                .map_err(|e| InvalidConfig::new("rewards.d2", e.to_string()))?;
        }

        let exploration =
            ExplorationSchedule::new(self.exploration.gamma, self.exploration.eta, model.sub_gaussian_d2()).map_err(
                |e| {
                    let field = match e {
                        crate::policy::ScheduleError::Gamma(_) => "exploration.gamma",
                        crate::policy::ScheduleError::Eta(_) => "exploration.eta",
                        crate::policy::ScheduleError::D2(_) => "rewards.d2",
                    };
                    InvalidConfig::new(field, e.to_string())
                },
            )?;

        let adjacency = match &self.comm {
            CommPolicy::None => None,
            CommPolicy::Er { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(InvalidConfig::new("comm.p", format!("must lie in [0, 1], got {p}")));
                }
                None
            }
            CommPolicy::Ucb { budget } => {
                if *budget > self.n_agents - 1 {
                    return Err(InvalidConfig::new(
                        "comm.budget",
                        format!("must be at most n_agents - 1 = {}, got {budget}", self.n_agents - 1),
                    ));
                }
                None
            }
            CommPolicy::Fixed { adjacency } => {
                let rows = adjacency.resolve(self.n_agents);
                if rows.len() != self.n_agents {
                    return Err(InvalidConfig::new(
                        "comm.adjacency",
                        format!("expected {} rows, got {}", self.n_agents, rows.len()),
                    ));
                }
                if let Some(k) = rows.iter().flatten().find(|&&k| k >= self.n_agents) {
                    return Err(InvalidConfig::new("comm.adjacency", format!("agent {k} out of range")));
                }
                Some(rows)
            }
        };

        Ok(Prepared {
            model,
            schedule: exploration,
            adjacency,
        })
    }

    /// Copy with the communication policy replaced.
    pub fn with_comm(&self, comm: CommPolicy) -> Self {
        Self { comm, ..self.clone() }
    }
}

/// Choices, neighbor sets and rewards of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub choices: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
}

/// Complete record of a trial; enough to replay every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub n_agents: usize,
    pub n_options: usize,
    pub initial: Vec<AgentSnapshot>,
    pub steps: Vec<StepRecord>,
}

impl TrialTrace {
    /// Awareness indicators of `agent` at the step stored at `index`.
    pub fn awareness(&self, index: usize, agent: usize) -> Vec<bool> {
        let step = &self.steps[index];
        let mut aware = vec![false; self.n_options];
        for &k in &step.neighbors[agent] {
            aware[step.choices[k]] = true;
        }
        aware
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub trace: Option<TrialTrace>,
    pub ledger: RegretLedger,
    pub agents: Vec<AgentState>,
}

/// Runs one trial and keeps its full trace.
pub fn run_trial(config: &SimConfig, trial: usize) -> Result<TrialOutcome, EngineError> {
    let prepared = config.prepare()?;
    Ok(simulate(config, &prepared, trial, true)?)
}

/// Runs one trial; `record_trace = false` skips the trace.
pub fn run_trial_with(config: &SimConfig, trial: usize, record_trace: bool) -> Result<TrialOutcome, EngineError> {
    let prepared = config.prepare()?;
    Ok(simulate(config, &prepared, trial, record_trace)?)
}

#[derive(Debug, Error)]
enum StepError {
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<StepError> for EngineError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Update(e) => EngineError::Update(e),
            StepError::Ledger(e) => EngineError::Ledger(e),
        }
    }
}

fn simulate(
    config: &SimConfig,
    prepared: &Prepared,
    trial: usize,
    record_trace: bool,
) -> Result<TrialOutcome, StepError> {
    let n_agents = config.n_agents;
    let n_options = config.n_options;
    let model = &prepared.model;
    let schedule = &prepared.schedule;
    let streams = TrialStreams::new(config.seed, trial as u64);

    let mut agents: Vec<AgentState> = (0..n_agents)
        .map(|j| init_agent(j, n_options, n_agents, &config.prior, &mut streams.prior(j)))
        .collect();
    let mut tie_rngs: Vec<_> = (0..n_agents).map(|j| streams.tie_break(j)).collect();
    let mut graph_rngs: Vec<_> = (0..n_agents).map(|j| streams.graph(j)).collect();
    let mut ledger = RegretLedger::new(n_agents, n_options, model.gap_lower(), *schedule);
    let mut trace = record_trace.then(|| TrialTrace {
        n_agents,
        n_options,
        initial: agents.iter().map(AgentState::snapshot).collect(),
        steps: Vec::with_capacity(config.horizon as usize),
    });

    for t in 1..=config.horizon {
        let choices: Vec<usize> = agents
            .iter()
            .zip(tie_rngs.iter_mut())
            .map(|(a, rng)| select_option(a, t, schedule, rng))
            .collect();

        let neighbors: Vec<NeighborSet> = (0..n_agents)
            .map(|j| match &config.comm {
                CommPolicy::None => select_neighbors_fixed(j, &[]),
                CommPolicy::Fixed { .. } => {
                    let rows = prepared.adjacency.as_ref().expect("fixed adjacency resolved");
                    select_neighbors_fixed(j, &rows[j])
                }
                CommPolicy::Er { p } => select_neighbors_er(j, n_agents, *p, &mut graph_rngs[j]),
                CommPolicy::Ucb { budget } => {
                    select_neighbors_ucb(&agents[j], choices[j], t, *budget, schedule, &mut graph_rngs[j])
                }
            })
            .collect();

        let draw = model.draw_rewards(t, &mut streams.rewards(t));

        for j in 0..n_agents {
            let batch = ObservationBatch {
                step: t,
                observations: neighbors[j]
                    .members
                    .iter()
                    .map(|&k| Observation {
                        source: k,
                        option: choices[k],
                        reward: draw.values[choices[k]],
                    })
                    .collect(),
            };
            let aware = compute_awareness(&batch, n_options);
            ledger.record_step(j, choices[j], &aware, agents[j].counts(), &draw, model, t)?;
            agents[j].update(&batch)?;
        }
        ledger.finish_step(t)?;

        if let Some(trace) = trace.as_mut() {
            trace.steps.push(StepRecord {
                t,
                choices,
                neighbors: neighbors.into_iter().map(|n| n.members).collect(),
                rewards: draw.values,
            });
        }
    }

    Ok(TrialOutcome {
        trial,
        seed: streams.seed(),
        trace,
        ledger,
        agents,
    })
}

/// Cross-trial mean and standard error of the network regret per agent at
/// step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: u64,
    pub self_regret: f64,
    pub se_self: f64,
    pub comm_regret: f64,
    pub se_comm: f64,
}

/// Aggregated results of all trials of one configuration.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: SimConfig,
    pub series: Vec<SeriesPoint>,
    /// Final network self regret per agent of each trial, in trial order.
    pub final_self: Vec<f64>,
    pub final_comm: Vec<f64>,
    pub ledgers: Vec<RegretLedger>,
    pub pooled: RegretLedger,
    pub bounds: Vec<BoundCheck>,
    pub trial_seeds: Vec<u64>,
}

impl ExperimentResult {
    pub fn policy(&self) -> &CommPolicy {
        &self.config.comm
    }

    /// Per-trial `f_ik`, `None` where the trial has no data.
    pub fn trial_f_ik(&self, agent: usize, option: usize) -> Vec<Option<f64>> {
        self.ledgers.iter().map(|l| l.f_ik(agent, option)).collect()
    }
}

/// Runs `config.trials` independent trials in parallel and aggregates them
/// in trial order, so the result does not depend on the thread count.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentResult, EngineError> {
    let prepared = config.prepare()?;
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|k| simulate(config, &prepared, k, false))
        .collect::<Result<Vec<_>, _>>()?;

    let per_trial_self: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|o| o.ledger.network_regret_per_agent(RegretKind::SelfRegret))
        .collect();
    let per_trial_comm: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|o| o.ledger.network_regret_per_agent(RegretKind::CommRegret))
        .collect();

    let mut column = vec![0.0; outcomes.len()];
    let series = (0..config.horizon as usize)
        .map(|idx| {
            column.iter_mut().zip(&per_trial_self).for_each(|(c, s)| *c = s[idx]);
            let (self_regret, se_self) = mean_se(&column);
            column.iter_mut().zip(&per_trial_comm).for_each(|(c, s)| *c = s[idx]);
            let (comm_regret, se_comm) = mean_se(&column);
            SeriesPoint {
                t: idx as u64 + 1,
                self_regret,
                se_self,
                comm_regret,
                se_comm,
            }
        })
        .collect();

    let ledgers: Vec<RegretLedger> = outcomes.into_iter().map(|o| o.ledger).collect();
    let pooled = RegretLedger::pooled(&ledgers)?.expect("at least one trial");
    let prefactor = comm_prefactor(&config.comm, config.n_agents);
    let bounds = theorem1_bound(&prepared.model, &prepared.schedule, &pooled, &prefactor, config.horizon);

    Ok(ExperimentResult {
        config: config.clone(),
        series,
        final_self: per_trial_self.iter().map(|s| *s.last().unwrap()).collect(),
        final_comm: per_trial_comm.iter().map(|s| *s.last().unwrap()).collect(),
        trial_seeds: (0..config.trials)
            .map(|k| TrialStreams::new(config.seed, k as u64).seed())
            .collect(),
        ledgers,
        pooled,
        bounds,
    })
}

/// Convenience constructor for the common stationary Gaussian setup.
pub fn gaussian_config(
    n_agents: usize,
    means: Vec<f64>,
    sigma2: f64,
    horizon: u64,
    trials: usize,
    seed: u64,
    comm: CommPolicy,
) -> SimConfig {
    SimConfig {
        n_agents,
        n_options: means.len(),
        horizon,
        trials,
        seed,
        rewards: RewardSpec {
            sigma2: Some(sigma2),
            means: Some(means),
            ..RewardSpec::default()
        },
        exploration: ExplorationSpec::default(),
        prior: Prior::default(),
        comm,
    }
}

/// Fixed-graph policy from explicit neighbor lists.
pub fn fixed_policy(rows: Vec<Vec<usize>>) -> CommPolicy {
    CommPolicy::Fixed {
        adjacency: Adjacency::Lists(rows),
    }
}
