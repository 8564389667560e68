//! Simulation of the decentralized multi-agent multi-armed bandit.
//!
//! Agents pick options with a UCB rule over estimates built from their own
//! pulls and their neighbors' reports, and choose whom to listen to either
//! at random (Erdős–Rényi), from a fixed graph, or with a UCB rule that
//! favors peers likely to be exploring. Self and communication regret are
//! tracked per agent and option and compared against logarithmic bounds.

pub mod agent;
pub mod cli;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod output;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod stats;

pub use agent::{compute_awareness, init_agent, AgentState, Observation, ObservationBatch, Prior};
pub use config::{parse_config, preset, ExperimentSpec, Sweep};
pub use engine::{run_experiment, run_trial, ExperimentResult, SimConfig, TrialTrace};
pub use metrics::{theorem1_bound, BoundCheck, RegretKind, RegretLedger};
pub use policy::{
    select_neighbors_er, select_neighbors_fixed, select_neighbors_ucb, select_option, ucb_index, CommPolicy,
    ExplorationSchedule, NeighborSet,
};
pub use reward::{validate_model, MeanSchedule, Noise, RewardDraw, RewardModel};
