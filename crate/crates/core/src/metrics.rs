//! Regret accounting.
//!
//! Self regret charges an agent the expected gap of every suboptimal option
//! it pulls. Communication regret charges it the expected gap of every
//! suboptimal option it learns about from a neighbor at a step where it did
//! not pull that option itself. The f_ik counters track, below the pull
//! threshold `l(t)`, how many awareness events of an option came from the
//! agent's own pulls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{CommPolicy, ExplorationSchedule};
use crate::reward::{RewardDraw, RewardModel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("agent {agent} already recorded step {t}")]
    DoubleRecord { agent: usize, t: u64 },
    #[error("agent {agent} recorded step {got} but step {expected} was expected")]
    OutOfOrder { agent: usize, expected: u64, got: u64 },
    #[error("step {t} closed before agent {agent} recorded it")]
    Incomplete { agent: usize, t: u64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ledgers with different shapes cannot be merged")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretKind {
    SelfRegret,
    CommRegret,
}

/// Regret and f_ik counters for every `(agent, option)` of a trial.
///
/// Matrices are row-major `[agent][option]`. A ledger can absorb others of
/// the same shape with [`RegretLedger::merge`]; per-trial means divide by
/// [`RegretLedger::trials`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    n_agents: usize,
    n_options: usize,
    gap_lower: f64,
    schedule: ExplorationSchedule,
    trials: u64,
    pub self_pulls: Vec<u64>,
    pub comm_events: Vec<u64>,
    pub self_regret: Vec<f64>,
    pub comm_regret: Vec<f64>,
    pub self_reward: Vec<f64>,
    pub comm_reward: Vec<f64>,
    pub fik_num: Vec<u64>,
    pub fik_den: Vec<u64>,
    recorded_through: Vec<u64>,
    steps_closed: u64,
    running_self: f64,
    running_comm: f64,
    /// Network totals (sum over agents and options) after each closed step.
    self_series: Vec<f64>,
    comm_series: Vec<f64>,
}

impl RegretLedger {
    /// `gap_lower` is the model's Δ, used by the threshold `l(t)`.
    pub fn new(n_agents: usize, n_options: usize, gap_lower: f64, schedule: ExplorationSchedule) -> Self {
        let cells = n_agents * n_options;
        Self {
            n_agents,
            n_options,
            gap_lower,
            schedule,
            trials: 1,
            self_pulls: vec![0; cells],
            comm_events: vec![0; cells],
            self_regret: vec![0.0; cells],
            comm_regret: vec![0.0; cells],
            self_reward: vec![0.0; cells],
            comm_reward: vec![0.0; cells],
            fik_num: vec![0; cells],
            fik_den: vec![0; cells],
            recorded_through: vec![0; n_agents],
            steps_closed: 0,
            running_self: 0.0,
            running_comm: 0.0,
            self_series: Vec::new(),
            comm_series: Vec::new(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn steps(&self) -> u64 {
        self.steps_closed
    }

    #[inline]
    fn cell(&self, agent: usize, option: usize) -> usize {
        agent * self.n_options + option
    }

    /// Records agent `agent`'s step `t`.
    ///
    /// `counts_before` holds the agent's awareness counts as of step `t - 1`
    /// and `awareness` its indicators for step `t`.
    #[allow(clippy::too_many_arguments)]
    pub fn record_step(
        &mut self,
        agent: usize,
        choice: usize,
        awareness: &[bool],
        counts_before: &[u64],
        draw: &RewardDraw,
        model: &RewardModel,
        t: u64,
    ) -> Result<(), LedgerError> {
        if agent >= self.n_agents || choice >= self.n_options {
            return Err(LedgerError::Dimension(format!("agent {agent}, option {choice}")));
        }
        if awareness.len() != self.n_options
            || counts_before.len() != self.n_options
            || draw.values.len() != self.n_options
        {
            return Err(LedgerError::Dimension("per-option vector length".into()));
        }
        let last = self.recorded_through[agent];
        if t <= last {
            return Err(LedgerError::DoubleRecord { agent, t });
        }
        if t != last + 1 {
            return Err(LedgerError::OutOfOrder {
                agent,
                expected: last + 1,
                got: t,
            });
        }
        self.recorded_through[agent] = t;

        let threshold = self.schedule.threshold(t - 1, self.gap_lower);

        let c = self.cell(agent, choice);
        let gap = model.gap(choice, t);
        self.self_pulls[c] += 1;
        self.self_regret[c] += gap;
        self.self_reward[c] += draw.values[choice];
        self.running_self += gap;
        if t >= 2 && counts_before[choice] <= threshold {
            self.fik_num[c] += 1;
        }

        for (i, &aware) in awareness.iter().enumerate() {
            if !aware {
                continue;
            }
            let c = self.cell(agent, i);
            if counts_before[i] <= threshold {
                self.fik_den[c] += 1;
            }
            if i != choice {
                let gap = model.gap(i, t);
                self.comm_events[c] += 1;
                self.comm_regret[c] += gap;
                self.comm_reward[c] += draw.values[i];
                self.running_comm += gap;
            }
        }
        Ok(())
    }

    /// Closes step `t` once every agent has recorded it and appends the
    /// network totals to the time series.
    pub fn finish_step(&mut self, t: u64) -> Result<(), LedgerError> {
        if let Some(agent) = self.recorded_through.iter().position(|&r| r != t) {
            return Err(LedgerError::Incomplete { agent, t });
        }
        self.steps_closed = t;
        self.self_series.push(self.running_self);
        self.comm_series.push(self.running_comm);
        Ok(())
    }

    /// Adds the counters and series of another ledger of the same shape.
    pub fn merge(&mut self, other: &RegretLedger) -> Result<(), LedgerError> {
        if self.n_agents != other.n_agents
            || self.n_options != other.n_options
            || self.self_series.len() != other.self_series.len()
        {
            return Err(LedgerError::Shape);
        }
        fn add<T: Copy + std::ops::AddAssign>(a: &mut [T], b: &[T]) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        add(&mut self.self_pulls, &other.self_pulls);
        add(&mut self.comm_events, &other.comm_events);
        add(&mut self.self_regret, &other.self_regret);
        add(&mut self.comm_regret, &other.comm_regret);
        add(&mut self.self_reward, &other.self_reward);
        add(&mut self.comm_reward, &other.comm_reward);
        add(&mut self.fik_num, &other.fik_num);
        add(&mut self.fik_den, &other.fik_den);
        add(&mut self.self_series, &other.self_series);
        add(&mut self.comm_series, &other.comm_series);
        self.running_self += other.running_self;
        self.running_comm += other.running_comm;
        self.trials += other.trials;
        Ok(())
    }

    /// Sum of a list of same-shape ledgers.
    pub fn pooled<'a, I>(ledgers: I) -> Result<Option<RegretLedger>, LedgerError>
    where
        I: IntoIterator<Item = &'a RegretLedger>,
    {
        let mut iter = ledgers.into_iter();
        let Some(first) = iter.next() else {
            return Ok(None);
        };
        let mut acc = first.clone();
        for l in iter {
            acc.merge(l)?;
        }
        Ok(Some(acc))
    }

    pub fn self_pulls(&self, agent: usize, option: usize) -> u64 {
        self.self_pulls[self.cell(agent, option)]
    }

    pub fn comm_events(&self, agent: usize, option: usize) -> u64 {
        self.comm_events[self.cell(agent, option)]
    }

    pub fn self_regret(&self, agent: usize, option: usize) -> f64 {
        self.self_regret[self.cell(agent, option)]
    }

    pub fn comm_regret(&self, agent: usize, option: usize) -> f64 {
        self.comm_regret[self.cell(agent, option)]
    }

    pub fn fik_counts(&self, agent: usize, option: usize) -> (u64, u64) {
        let c = self.cell(agent, option);
        (self.fik_num[c], self.fik_den[c])
    }

    /// `f_ik` for agent `agent` and option `option`; `None` when no
    /// below-threshold awareness event has been recorded.
    pub fn f_ik(&self, agent: usize, option: usize) -> Option<f64> {
        let (num, den) = self.fik_counts(agent, option);
        (den > 0).then(|| num as f64 / den as f64)
    }

    /// `max_k f_ik` over agents with data.
    pub fn f_i(&self, option: usize) -> Option<f64> {
        (0..self.n_agents)
            .filter_map(|k| self.f_ik(k, option))
            .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))))
    }

    /// Network regret per agent after each step, averaged over pooled trials.
    pub fn network_regret_per_agent(&self, kind: RegretKind) -> Vec<f64> {
        let scale = (self.n_agents as u64 * self.trials) as f64;
        let series = match kind {
            RegretKind::SelfRegret => &self.self_series,
            RegretKind::CommRegret => &self.comm_series,
        };
        series.iter().map(|v| v / scale).collect()
    }

    /// Final network regret per agent (0 before any step closes).
    pub fn final_network_regret_per_agent(&self, kind: RegretKind) -> f64 {
        self.network_regret_per_agent(kind).last().copied().unwrap_or(0.0)
    }
}

/// Expected-connectivity prefactor of the communication-regret bound for
/// each agent: mean peer count `(n_A - 1) p` for i.i.d. ER graphs, the
/// budget for UCB selection, the out-degree for fixed graphs.
pub fn comm_prefactor(policy: &CommPolicy, n_agents: usize) -> Vec<f64> {
    let peers = n_agents.saturating_sub(1);
    match policy {
        CommPolicy::None => vec![0.0; n_agents],
        CommPolicy::Er { p } => vec![peers as f64 * p; n_agents],
        CommPolicy::Ucb { budget } => vec![(*budget).min(peers) as f64; n_agents],
        CommPolicy::Fixed { adjacency } => adjacency
            .resolve(n_agents)
            .iter()
            .enumerate()
            .map(|(j, row)| row.iter().filter(|&&k| k != j).count() as f64)
            .collect(),
    }
}

/// Measured values against the logarithmic regret bound for one
/// `(agent, suboptimal option)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub agent: usize,
    pub option: usize,
    pub mean_self_pulls: f64,
    pub mean_comm_events: f64,
    pub mean_self_regret: f64,
    pub mean_comm_regret: f64,
    /// `max_k f_ik` from the pooled ledger, if any agent has data.
    pub f_measured: Option<f64>,
    /// `2 + 4ϑ + ⌈4Ψ(T)/Δ²⌉`, the pull-count bound with `f = 1`.
    pub pull_bound: f64,
    /// Same with the measured `f_i` in place of 1.
    pub pull_bound_measured_f: f64,
    /// `Δ̄ · pull_bound`.
    pub self_regret_bound: f64,
    pub self_regret_bound_measured_f: f64,
    pub comm_prefactor: f64,
    /// `prefactor · pull_bound`, bound on awareness events via neighbors.
    pub comm_event_bound: f64,
    /// `Δ̄ · prefactor · pull_bound`.
    pub comm_regret_bound: f64,
    /// Conservative check (`f = 1`) on pulls, self regret and communication regret.
    pub pass: bool,
}

/// The `(2 + 4ϑ + f ⌈4Ψ(T)/Δ²⌉)` factor shared by both regret bounds.
pub fn pull_bound(schedule: &ExplorationSchedule, gap_lower: f64, horizon: u64, f: f64) -> f64 {
    2.0 + 4.0 * schedule.vartheta() + f * schedule.threshold(horizon, gap_lower) as f64
}

/// Evaluates the logarithmic self- and communication-regret bounds at
/// `horizon` for every agent and suboptimal option of a pooled ledger, and
/// compares them with the per-trial mean of the measured quantities.
pub fn theorem1_bound(
    model: &RewardModel,
    schedule: &ExplorationSchedule,
    ledger: &RegretLedger,
    prefactor: &[f64],
    horizon: u64,
) -> Vec<BoundCheck> {
    let trials = ledger.trials() as f64;
    let conservative = pull_bound(schedule, model.gap_lower(), horizon, 1.0);
    let gap_upper = model.gap_upper();
    let mut out = Vec::new();
    for option in (0..model.n_options()).filter(|&i| i != model.optimal()) {
        let f_measured = ledger.f_i(option);
        let measured = pull_bound(schedule, model.gap_lower(), horizon, f_measured.unwrap_or(1.0));
        for (agent, &pre) in prefactor.iter().enumerate().take(ledger.n_agents()) {
            let mean_self_pulls = ledger.self_pulls(agent, option) as f64 / trials;
            let mean_comm_events = ledger.comm_events(agent, option) as f64 / trials;
            let mean_self_regret = ledger.self_regret(agent, option) / trials;
            let mean_comm_regret = ledger.comm_regret(agent, option) / trials;
            let self_regret_bound = gap_upper * conservative;
            let comm_regret_bound = gap_upper * pre * conservative;
            let pass = mean_self_pulls <= conservative
                && mean_self_regret <= self_regret_bound
                && mean_comm_regret <= comm_regret_bound;
            out.push(BoundCheck {
                agent,
                option,
                mean_self_pulls,
                mean_comm_events,
                mean_self_regret,
                mean_comm_regret,
                f_measured,
                pull_bound: conservative,
                pull_bound_measured_f: measured,
                self_regret_bound,
                self_regret_bound_measured_f: gap_upper * measured,
                comm_prefactor: pre,
                comm_event_bound: pre * conservative,
                comm_regret_bound,
                pass,
            });
        }
    }
    out
}
