//! Cross-entropy method over the four unnormalized coefficients.
//!
//! Each candidate is played as a full episode with a constant action, so
//! after the first step every pull is a cache hit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{Action, Environment};
use super::{episode_rng, Policy, Progress, TrainConfig, TrainResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub init_std: f64,
    pub min_std: f64,
    /// Weight of the new elite statistics in the running mean and spread.
    pub smoothing: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { population: 32, elite_fraction: 0.2, init_std: 1.0, min_std: 1e-3, smoothing: 0.7 }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParameter("cem: population must be at least 2".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidParameter("cem: elite_fraction must lie in (0, 1]".into()));
        }
        if !(self.init_std > 0.0 && self.min_std >= 0.0 && self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::InvalidParameter("cem: spreads must be positive and smoothing in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Ignores observations and always plays the same coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantPolicy(pub [f64; 4]);

impl Policy for ConstantPolicy {
    fn act(&self, _: &[f64], _: &mut ChaCha8Rng) -> [f64; 4] {
        self.0
    }
}

struct Played {
    candidate: [f64; 4],
    ret: f64,
    rewards: Vec<f64>,
    visited: Vec<(Action, f64)>,
}

fn play(env: &Environment, candidate: [f64; 4], mut rng: ChaCha8Rng) -> Result<Played> {
    let mut state = env.reset(&mut rng)?;
    let mut visited = Vec::new();
    if state.valid {
        visited.push((state.action, state.mean_fidelity));
    }
    let mut rewards = Vec::with_capacity(env.config().steps_per_episode);
    loop {
        let out = env.step(&state, &candidate)?;
        rewards.push(out.reward);
        if out.state.valid {
            visited.push((out.state.action, out.state.mean_fidelity));
        }
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(Played { candidate, ret: rewards.iter().sum(), rewards, visited })
}

pub fn train_cem(env: &Environment, cfg: &TrainConfig, cem: &CemConfig) -> Result<TrainResult> {
    cem.validate()?;
    let mut mean = [0.0; 4];
    let mut std = [cem.init_std; 4];
    let n_elite = ((cem.population as f64 * cem.elite_fraction).ceil() as usize).max(1);
    let mut sample_rng = episode_rng(cfg.seed, u64::MAX);
    let mut progress = Progress::new();
    let mut early = false;
    while progress.episodes() < cfg.budget {
        let base = progress.episodes();
        let n = cem.population.min(cfg.budget - base);
        let candidates: Vec<[f64; 4]> = (0..n)
            .map(|_| std::array::from_fn(|d| mean[d] + std[d] * sample_rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut played: Vec<Played> = candidates
            .into_par_iter()
            .enumerate()
            .map(|(i, c)| play(env, c, episode_rng(cfg.seed, (base + i) as u64)))
            .collect::<Result<_>>()?;
        for p in &played {
            progress.record(cfg, &p.rewards, &p.visited);
        }
        // stable sort keeps ties in sampling order
        played.sort_by(|a, b| b.ret.total_cmp(&a.ret));
        let elite = &played[..n_elite.min(played.len())];
        for d in 0..4 {
            let m = elite.iter().map(|p| p.candidate[d]).sum::<f64>() / elite.len() as f64;
            let v = elite.iter().map(|p| (p.candidate[d] - m).powi(2)).sum::<f64>() / elite.len() as f64;
            mean[d] = (1.0 - cem.smoothing) * mean[d] + cem.smoothing * m;
            std[d] = ((1.0 - cem.smoothing) * std[d] + cem.smoothing * v.sqrt()).max(cem.min_std);
        }
        if progress.should_stop(cfg) {
            early = true;
            break;
        }
    }
    progress.finish("cem", env, early)
}
