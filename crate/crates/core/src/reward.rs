//! Option reward processes.
//!
//! Every option carries a deterministic mean schedule plus zero-mean noise
//! that is sub-Gaussian with scale `d`, i.e. `E[exp(λX)] <= exp(λ E[X] + λ²d²/8)`.
//! A single realization per option is drawn at each step and shared by every
//! agent that learns about that option during the step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Expected reward of each option as a function of the step index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanSchedule {
    /// Stationary means.
    Constant(Vec<f64>),
    /// Means move linearly from `start` at `t = 1` to `end` at `t = horizon`,
    /// and stay at `end` afterwards.
    Linear {
        start: Vec<f64>,
        end: Vec<f64>,
        horizon: u64,
    },
}

impl MeanSchedule {
    /// Means `top, top - spacing, top - 2 spacing, ...`: option 0 is optimal
    /// and consecutive options are `spacing` apart.
    pub fn evenly_spaced(n_options: usize, top: f64, spacing: f64) -> Self {
        MeanSchedule::Constant((0..n_options).map(|i| top - spacing * i as f64).collect())
    }

    pub fn n_options(&self) -> usize {
        match self {
            MeanSchedule::Constant(m) => m.len(),
            MeanSchedule::Linear { start, .. } => start.len(),
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, MeanSchedule::Constant(_))
    }

    #[inline]
    pub fn mean(&self, option: usize, t: u64) -> f64 {
        match self {
            MeanSchedule::Constant(m) => m[option],
            MeanSchedule::Linear { start, end, horizon } => {
                if *horizon <= 1 {
                    return end[option];
                }
                let frac = (t.clamp(1, *horizon) - 1) as f64 / (*horizon - 1) as f64;
                start[option] + (end[option] - start[option]) * frac
            }
        }
    }
}

/// Noise added to the mean schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    /// Normal noise with variance `sigma2`.
    Gaussian { sigma2: f64 },
    /// Uniform noise on an interval of length `interval` centered on the mean.
    Bounded { interval: f64 },
}

impl Noise {
    /// Smallest `d²` satisfying the sub-Gaussian moment bound.
    ///
    /// Matching `exp(λμ + λ²σ²/2)` against `exp(λμ + λ²d²/8)` gives
    /// `d² = 4σ²` for Gaussian noise; a bounded variable on an interval of
    /// length `d` satisfies the bound with that `d`. A noiseless process
    /// satisfies it for every `d > 0`, and unit scale is used.
    pub fn default_d2(&self) -> f64 {
        let d2 = match *self {
            Noise::Gaussian { sigma2 } => 4.0 * sigma2,
            Noise::Bounded { interval } => interval * interval,
        };
        if d2 > 0.0 {
            d2
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelViolation {
    #[error("at least two options are required, got {0}")]
    TooFewOptions(usize),
    #[error("schedule start has {start} options but end has {end}")]
    LengthMismatch { start: usize, end: usize },
    #[error("mean of option {option} at t = {t} is not finite")]
    NonFinite { option: usize, t: u64 },
    #[error("options {first} and {second} share the maximal mean")]
    NonUniqueOptimum { first: usize, second: usize },
    #[error("option {option} at t = {s} reaches the optimal option's mean at t = {r} (gap {gap})")]
    Crossing { option: usize, r: u64, s: u64, gap: f64 },
    #[error("invalid noise parameter: {0}")]
    InvalidNoise(String),
    #[error("sub-Gaussian scale d² must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// Optimal option and gap constants of a validated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub optimal: usize,
    /// Minimal gap over all time pairs, Δ.
    pub gap_lower: f64,
    /// Maximal gap over all time pairs, Δ̄.
    pub gap_upper: f64,
}

/// Checks that one option is optimal at every step with a positive gap to
/// every other option across all pairs of steps in `1..=horizon`.
///
/// Returns the first violating `(option, r, s)` triple when the optimal
/// option's smallest mean (attained at `r`) is matched by another option at
/// step `s`.
pub fn validate_model(schedule: &MeanSchedule, horizon: u64) -> Result<GapSummary, ModelViolation> {
    let n = schedule.n_options();
    if n < 2 {
        return Err(ModelViolation::TooFewOptions(n));
    }
    if let MeanSchedule::Linear { start, end, .. } = schedule {
        if start.len() != end.len() {
            return Err(ModelViolation::LengthMismatch {
                start: start.len(),
                end: end.len(),
            });
        }
    }
    let last = if schedule.is_stationary() { 1 } else { horizon.max(1) };

    for t in 1..=last {
        for i in 0..n {
            if !schedule.mean(i, t).is_finite() {
                return Err(ModelViolation::NonFinite { option: i, t });
            }
        }
    }

    let mut optimal = 0;
    for i in 1..n {
        if schedule.mean(i, 1) > schedule.mean(optimal, 1) {
            optimal = i;
        }
    }
    if let Some(second) = (0..n).find(|&i| i != optimal && schedule.mean(i, 1) == schedule.mean(optimal, 1)) {
        return Err(ModelViolation::NonUniqueOptimum {
            first: optimal.min(second),
            second: optimal.max(second),
        });
    }

    let (mut opt_min, mut opt_min_at, mut opt_max) = (f64::INFINITY, 1, f64::NEG_INFINITY);
    for r in 1..=last {
        let m = schedule.mean(optimal, r);
        if m < opt_min {
            opt_min = m;
            opt_min_at = r;
        }
        opt_max = opt_max.max(m);
    }

    let (mut sub_min, mut sub_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 1..=last {
        for i in (0..n).filter(|&i| i != optimal) {
            let m = schedule.mean(i, s);
            if m >= opt_min {
                return Err(ModelViolation::Crossing {
                    option: i,
                    r: opt_min_at,
                    s,
                    gap: opt_min - m,
                });
            }
            sub_min = sub_min.min(m);
            sub_max = sub_max.max(m);
        }
    }

    Ok(GapSummary {
        optimal,
        gap_lower: opt_min - sub_max,
        gap_upper: opt_max - sub_min,
    })
}

/// One realization of every option's reward at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardDraw {
    pub t: u64,
    pub values: Vec<f64>,
}

/// A validated reward model. Construction runs [`validate_model`], so every
/// instance satisfies the gap conditions over its horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardModel {
    schedule: MeanSchedule,
    noise: Noise,
    horizon: u64,
    d2: f64,
    gaps: GapSummary,
}

impl RewardModel {
    pub fn new(schedule: MeanSchedule, noise: Noise, horizon: u64) -> Result<Self, ModelViolation> {
        match noise {
            Noise::Gaussian { sigma2 } if !(sigma2 >= 0.0 && sigma2.is_finite()) => {
                return Err(ModelViolation::InvalidNoise(format!("sigma2 = {sigma2}")))
            }
            Noise::Bounded { interval } if !(interval >= 0.0 && interval.is_finite()) => {
                return Err(ModelViolation::InvalidNoise(format!("interval = {interval}")))
            }
            _ => {}
        }
        let gaps = validate_model(&schedule, horizon)?;
        Ok(Self {
            schedule,
            noise,
            horizon,
            d2: noise.default_d2(),
            gaps,
        })
    }

    /// Overrides the sub-Gaussian scale. Any `d²` at least as large as the
    /// noise's own scale keeps the moment bound valid.
    pub fn with_sub_gaussian_d2(mut self, d2: f64) -> Result<Self, ModelViolation> {
        if !(d2 > 0.0 && d2.is_finite()) {
            return Err(ModelViolation::InvalidScale(d2));
        }
        self.d2 = d2;
        Ok(self)
    }

    pub fn n_options(&self) -> usize {
        self.schedule.n_options()
    }

    pub fn schedule(&self) -> &MeanSchedule {
        &self.schedule
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn optimal(&self) -> usize {
        self.gaps.optimal
    }

    pub fn gap_lower(&self) -> f64 {
        self.gaps.gap_lower
    }

    pub fn gap_upper(&self) -> f64 {
        self.gaps.gap_upper
    }

    pub fn gaps(&self) -> GapSummary {
        self.gaps
    }

    /// Squared sub-Gaussian scale `d²` shared by all options.
    pub fn sub_gaussian_d2(&self) -> f64 {
        self.d2
    }

    #[inline]
    pub fn mean(&self, option: usize, t: u64) -> f64 {
        self.schedule.mean(option, t)
    }

    /// Expected-reward gap between the optimal option and `option` at `t`.
    #[inline]
    pub fn gap(&self, option: usize, t: u64) -> f64 {
        if option == self.gaps.optimal {
            0.0
        } else {
            self.schedule.mean(self.gaps.optimal, t) - self.schedule.mean(option, t)
        }
    }

    /// Draws one reward per option for step `t`.
    pub fn draw_rewards<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> RewardDraw {
        let values = (0..self.n_options())
            .map(|i| {
                let mean = self.schedule.mean(i, t);
                match self.noise {
                    Noise::Gaussian { sigma2 } => {
                        let z: f64 = rng.sample(StandardNormal);
                        mean + sigma2.sqrt() * z
                    }
                    Noise::Bounded { interval } => mean + interval * (rng.random::<f64>() - 0.5),
                }
            })
            .collect();
        RewardDraw { t, values }
    }
}
