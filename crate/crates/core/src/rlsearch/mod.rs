//! Codeword search by reinforcement learning.
//!
//! Each step proposes a code from the `|0⟩,|4⟩ / |2⟩,|6⟩` family and is
//! rewarded by how far its mean fidelity beats break-even. Every action
//! fully determines the next observation, so an episode is effectively a
//! sequence of bandit pulls; it is still run as `K` steps.

pub mod cem;
pub mod env;
pub mod nn;
pub mod ppo;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codes::CodePair;
use crate::error::{Error, Result};

pub use cem::{CemConfig, ConstantPolicy};
pub use env::{reward, Action, EnvConfig, EnvState, Environment, Evaluation, ObservationKind, StepOutcome};
pub use ppo::{GaussianPolicy, PpoConfig};

/// Smallest training budget accepted by [`train`].
pub const MIN_BUDGET: usize = 1000;

/// Maps observations to an unnormalized 4-coefficient action.
pub trait Policy: Sync {
    fn act(&self, observations: &[f64], rng: &mut ChaCha8Rng) -> [f64; 4];
}

/// Random generator for episode `index` of a run seeded with `master`.
pub fn episode_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Optimizer {
    Ppo(PpoConfig),
    Cem(CemConfig),
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Ppo(PpoConfig::default())
    }
}

/// Budget, seed and stopping rule shared by both optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub budget: usize,
    pub seed: u64,
    /// Stop once this many episodes pass without the best mean fidelity
    /// improving by more than `improvement_tol`; `0` disables the rule.
    pub patience: usize,
    pub min_episodes: usize,
    pub improvement_tol: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: 20_000,
            seed: 0,
            patience: 400,
            min_episodes: 400,
            improvement_tol: 1e-5,
            optimizer: Optimizer::default(),
        }
    }
}

/// Per-episode reward summary over its `K` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub episode: usize,
    pub r_min: f64,
    pub r_mean: f64,
    pub r_max: f64,
}

impl RewardStats {
    pub fn from_rewards(episode: usize, rewards: &[f64]) -> Self {
        let r_min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        Self { episode, r_min, r_mean, r_max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub method: String,
    pub best_action: Action,
    pub best_mean_fidelity: f64,
    pub break_even: f64,
    pub reward_history: Vec<RewardStats>,
    pub episodes: usize,
    pub evaluations: u64,
    pub cache_hits: u64,
    pub early_stopped: bool,
}

impl TrainResult {
    pub fn best_code(&self, truncation: usize) -> Result<CodePair> {
        self.best_action.code(truncation)
    }

    /// `(|⟨0_L|4⟩|², |⟨1_L|2⟩|²)`.
    pub fn rl_overlaps(&self) -> (f64, f64) {
        (self.best_action.c0[1].powi(2), self.best_action.c1[0].powi(2))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV columns `episode, r_min, r_mean, r_max`.
    pub fn write_reward_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "r_min", "r_mean", "r_max"])?;
        for s in &self.reward_history {
            w.write_record([
                s.episode.to_string(),
                crate::dynamics::format_float(s.r_min),
                crate::dynamics::format_float(s.r_mean),
                crate::dynamics::format_float(s.r_max),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tracks the best code seen and the early-stopping clock.
#[derive(Clone, Debug)]
pub(crate) struct Progress {
    best_action: Option<Action>,
    best_fidelity: f64,
    last_improvement: usize,
    history: Vec<RewardStats>,
}

impl Progress {
    pub(crate) fn new() -> Self {
        Self { best_action: None, best_fidelity: f64::NEG_INFINITY, last_improvement: 0, history: Vec::new() }
    }

    pub(crate) fn record(&mut self, cfg: &TrainConfig, rewards: &[f64], visited: &[(Action, f64)]) {
        let episode = self.history.len();
        self.history.push(RewardStats::from_rewards(episode, rewards));
        for &(a, f) in visited {
            if f > self.best_fidelity {
                if f > self.best_fidelity + cfg.improvement_tol {
                    self.last_improvement = episode;
                }
                self.best_fidelity = f;
                self.best_action = Some(a);
            }
        }
    }

    pub(crate) fn episodes(&self) -> usize {
        self.history.len()
    }

    pub(crate) fn should_stop(&self, cfg: &TrainConfig) -> bool {
        let n = self.episodes();
        cfg.patience > 0 && n >= cfg.min_episodes && n - self.last_improvement > cfg.patience
    }

    pub(crate) fn finish(self, method: &str, env: &Environment, early_stopped: bool) -> Result<TrainResult> {
        let best_action =
            self.best_action.ok_or_else(|| Error::InvalidParameter("no valid code was visited".into()))?;
        let (cache_hits, evaluations) = env.counters();
        Ok(TrainResult {
            method: method.into(),
            best_action,
            best_mean_fidelity: self.best_fidelity.clamp(0.0, 1.0),
            break_even: env.break_even(),
            episodes: self.history.len(),
            reward_history: self.history,
            evaluations,
            cache_hits,
            early_stopped,
        })
    }
}

/// Runs the configured optimizer for at most `cfg.budget` episodes and
/// returns the best code encountered.
pub fn train(env: &Environment, cfg: &TrainConfig) -> Result<TrainResult> {
    if cfg.budget < MIN_BUDGET {
        return Err(Error::InvalidParameter(format!(
            "budget must be at least {MIN_BUDGET} episodes, got {}",
            cfg.budget
        )));
    }
    if !(cfg.improvement_tol >= 0.0) {
        return Err(Error::InvalidParameter("improvement_tol must be non-negative".into()));
    }
    match &cfg.optimizer {
        Optimizer::Ppo(p) => ppo::train_ppo(env, cfg, p).map(|(r, _)| r),
        Optimizer::Cem(c) => cem::train_cem(env, cfg, c),
    }
}

/// Mean fidelity after each of the `K` steps of one rollout.
pub fn episode_fidelity_trace<P: Policy + ?Sized>(env: &Environment, policy: &P, seed: u64) -> Result<Vec<f64>> {
    let mut rng = episode_rng(seed, 0);
    let mut state = env.reset(&mut rng)?;
    let mut trace = Vec::with_capacity(env.config().steps_per_episode);
    loop {
        let action = policy.act(&state.observations, &mut rng);
        let out = env.step(&state, &action)?;
        trace.push(out.state.mean_fidelity);
        state = out.state;
        if out.done {
            return Ok(trace);
        }
    }
}
