//! Proximal policy optimization with a Gaussian policy over the four
//! unnormalized coefficients and a separate value network.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{Action, Environment};
use super::nn::{clip_grad_norm, Adam, Mlp};
use super::{episode_rng, Policy, Progress, TrainConfig, TrainResult};
use crate::error::{Error, Result};

const ACTION_DIM: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub clip_ratio: f64,
    pub hidden_sizes: Vec<usize>,
    pub episodes_per_update: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_learning_rate: f64,
    pub init_log_std: f64,
    pub min_log_std: f64,
    /// Rewards are multiplied by this before advantages and value targets.
    pub reward_scale: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            clip_ratio: 0.2,
            hidden_sizes: vec![64, 64],
            episodes_per_update: 8,
            epochs: 10,
            minibatch_size: 64,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.0,
            value_learning_rate: 1e-3,
            init_log_std: -0.7,
            min_log_std: -5.0,
            reward_scale: 0.01,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("ppo: {m}")));
        if !(self.learning_rate > 0.0 && self.value_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio must lie in (0, 1)");
        }
        if self.episodes_per_update == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("episodes_per_update, epochs and minibatch_size must be positive");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if !((0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.gae_lambda)) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Diagonal Gaussian with a network mean and state-independent spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    mean: Mlp,
    log_std: Vec<f64>,
    min_log_std: f64,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(obs_len: usize, hidden: &[usize], init_log_std: f64, min_log_std: f64, rng: &mut R) -> Self {
        Self {
            mean: Mlp::new(&layer_sizes(obs_len, hidden, ACTION_DIM), 0.01, rng),
            log_std: vec![init_log_std; ACTION_DIM],
            min_log_std,
        }
    }

    pub fn mean_action(&self, obs: &[f64]) -> [f64; 4] {
        let m = self.mean.predict(obs);
        [m[0], m[1], m[2], m[3]]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.max(self.min_log_std).exp()).collect()
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64; 4]) -> f64 {
        let mu = self.mean.predict(obs);
        gaussian_log_prob(&mu, &self.log_std, self.min_log_std, action)
    }

    /// Deterministic view that always plays the mean.
    pub fn greedy(&self) -> Greedy<'_> {
        Greedy(self)
    }

    fn n_params(&self) -> usize {
        self.mean.n_params() + ACTION_DIM
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let n = self.mean.n_params();
        self.mean.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
        for l in &mut self.log_std {
            *l = l.max(self.min_log_std);
        }
    }
}

fn gaussian_log_prob(mu: &[f64], log_std: &[f64], min_log_std: f64, a: &[f64; 4]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    mu.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, &ls), x)| {
            let ls = ls.max(min_log_std);
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - half_ln_2pi
        })
        .sum()
}

impl Policy for GaussianPolicy {
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> [f64; 4] {
        let mu = self.mean_action(obs);
        let sd = self.std();
        std::array::from_fn(|i| mu[i] + sd[i] * rng.sample::<f64, _>(StandardNormal))
    }
}

pub struct Greedy<'a>(&'a GaussianPolicy);

impl Policy for Greedy<'_> {
    fn act(&self, obs: &[f64], _: &mut ChaCha8Rng) -> [f64; 4] {
        self.0.mean_action(obs)
    }
}

struct Rollout {
    obs: Vec<Vec<f64>>,
    actions: Vec<[f64; 4]>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    visited: Vec<(Action, f64)>,
}

fn rollout(env: &Environment, policy: &GaussianPolicy, critic: &Mlp, mut rng: ChaCha8Rng) -> Result<Rollout> {
    let k = env.config().steps_per_episode;
    let mut r = Rollout {
        obs: Vec::with_capacity(k),
        actions: Vec::with_capacity(k),
        log_probs: Vec::with_capacity(k),
        values: Vec::with_capacity(k),
        rewards: Vec::with_capacity(k),
        visited: Vec::new(),
    };
    let mut state = env.reset(&mut rng)?;
    if state.valid {
        r.visited.push((state.action, state.mean_fidelity));
    }
    loop {
        let a = policy.act(&state.observations, &mut rng);
        r.log_probs.push(policy.log_prob(&state.observations, &a));
        r.values.push(critic.predict(&state.observations)[0]);
        let out = env.step(&state, &a)?;
        r.obs.push(std::mem::take(&mut state.observations));
        r.actions.push(a);
        r.rewards.push(out.reward);
        if out.state.valid {
            r.visited.push((out.state.action, out.state.mean_fidelity));
        }
        state = out.state;
        if out.done {
            return Ok(r);
        }
    }
}

/// Generalized advantage estimates and value targets for one episode
/// that terminates after its last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

struct Sample {
    obs: Vec<f64>,
    action: [f64; 4],
    log_prob: f64,
    advantage: f64,
    ret: f64,
}

/// Trains with PPO; returns the result and the final policy.
pub fn train_ppo(env: &Environment, cfg: &TrainConfig, ppo: &PpoConfig) -> Result<(TrainResult, GaussianPolicy)> {
    ppo.validate()?;
    let obs_len = env.observation_len();
    let mut init_rng = episode_rng(cfg.seed, u64::MAX);
    let mut policy = GaussianPolicy::new(obs_len, &ppo.hidden_sizes, ppo.init_log_std, ppo.min_log_std, &mut init_rng);
    let mut critic = Mlp::new(&layer_sizes(obs_len, &ppo.hidden_sizes, 1), 1.0, &mut init_rng);
    let mut policy_opt = Adam::new(policy.n_params(), ppo.learning_rate);
    let mut critic_opt = Adam::new(critic.n_params(), ppo.value_learning_rate);
    let mut shuffle_rng = episode_rng(cfg.seed, u64::MAX - 1);

    let mut progress = Progress::new();
    let mut early = false;
    while progress.episodes() < cfg.budget {
        let base = progress.episodes();
        let n = ppo.episodes_per_update.min(cfg.budget - base);
        let rollouts: Vec<Rollout> = (0..n)
            .into_par_iter()
            .map(|i| rollout(env, &policy, &critic, episode_rng(cfg.seed, (base + i) as u64)))
            .collect::<Result<_>>()?;

        let mut batch = Vec::new();
        for r in rollouts {
            progress.record(cfg, &r.rewards, &r.visited);
            let scaled: Vec<f64> = r.rewards.iter().map(|x| x * ppo.reward_scale).collect();
            let (adv, ret) = gae(&scaled, &r.values, ppo.gamma, ppo.gae_lambda);
            for (t, obs) in r.obs.into_iter().enumerate() {
                batch.push(Sample {
                    obs,
                    action: r.actions[t],
                    log_prob: r.log_probs[t],
                    advantage: adv[t],
                    ret: ret[t],
                });
            }
        }
        normalize_advantages(&mut batch);
        update(&mut policy, &mut critic, &mut policy_opt, &mut critic_opt, &batch, ppo, &mut shuffle_rng);

        if progress.should_stop(cfg) {
            early = true;
            break;
        }
    }
    Ok((progress.finish("ppo", env, early)?, policy))
}

fn normalize_advantages(batch: &mut [Sample]) {
    let n = batch.len() as f64;
    let mean = batch.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = batch.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    for s in batch {
        s.advantage = (s.advantage - mean) / sd;
    }
}

fn update(
    policy: &mut GaussianPolicy,
    critic: &mut Mlp,
    policy_opt: &mut Adam,
    critic_opt: &mut Adam,
    batch: &[Sample],
    ppo: &PpoConfig,
    rng: &mut ChaCha8Rng,
) {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let n_mean = policy.mean.n_params();
    for _ in 0..ppo.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(ppo.minibatch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut pg = vec![0.0; policy.n_params()];
            let mut vg = vec![0.0; critic.n_params()];
            for &i in chunk {
                let s = &batch[i];
                let (mu, tape) = policy.mean.forward(&s.obs);
                let logp = gaussian_log_prob(&mu, &policy.log_std, policy.min_log_std, &s.action);
                let ratio = (logp - s.log_prob).exp();
                let unclipped = ratio * s.advantage;
                let clipped = ratio.clamp(1.0 - ppo.clip_ratio, 1.0 + ppo.clip_ratio) * s.advantage;
                // loss = -min(unclipped, clipped); gradient flows only through the unclipped term
                let dlogp = if unclipped <= clipped { -ratio * s.advantage * scale } else { 0.0 };
                let mut grad_mu = [0.0; ACTION_DIM];
                for d in 0..ACTION_DIM {
                    let ls = policy.log_std[d].max(policy.min_log_std);
                    let var = (2.0 * ls).exp();
                    let diff = s.action[d] - mu[d];
                    grad_mu[d] = dlogp * diff / var;
                    pg[n_mean + d] += dlogp * (diff * diff / var - 1.0) - ppo.entropy_coef * scale;
                }
                policy.mean.backward(&tape, &grad_mu, &mut pg[..n_mean]);

                let (v, vtape) = critic.forward(&s.obs);
                critic.backward(&vtape, &[(v[0] - s.ret) * scale], &mut vg);
            }
            clip_grad_norm(&mut pg, ppo.max_grad_norm);
            clip_grad_norm(&mut vg, ppo.max_grad_norm);
            let mut p = policy.params();
            policy_opt.step(&mut p, &pg);
            policy.set_params(&p);
            let mut c = critic.params().to_vec();
            critic_opt.step(&mut c, &vg);
            critic.params_mut().copy_from_slice(&c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gae_reduces_to_returns_with_unit_lambda_and_zero_values() {
        let (adv, ret) = gae(&[1.0, 2.0, 3.0], &[0.0; 3], 0.5, 1.0);
        assert_eq!(ret, vec![1.0 + 0.5 * 2.0 + 0.25 * 3.0, 2.0 + 1.5, 3.0]);
        assert_eq!(adv, ret);
        let (adv0, _) = gae(&[1.0, 1.0], &[0.5, 0.25], 0.9, 0.0);
        assert!((adv0[0] - (1.0 + 0.9 * 0.25 - 0.5)).abs() < 1e-15);
        assert!((adv0[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GaussianPolicy::new(6, &[8], -0.5, -5.0, &mut rng);
        let obs = [0.1; 6];
        let mu = p.mean_action(&obs);
        let lp = p.log_prob(&obs, &mu);
        let expect = 4.0 * (0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GaussianPolicy::new(6, &[8], -0.5, -5.0, &mut rng);
        let a = p.act(&[0.5; 6], &mut episode_rng(4, 7));
        let b = p.act(&[0.5; 6], &mut episode_rng(4, 7));
        let c = p.act(&[0.5; 6], &mut episode_rng(4, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(p.greedy().act(&[0.5; 6], &mut rng), p.mean_action(&[0.5; 6]));
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        // one sample, ratio inside the clip range: loss = -exp(logp - logp_old)·A
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut policy = GaussianPolicy::new(3, &[5], -0.3, -5.0, &mut rng);
        let obs = vec![0.2, -0.4, 0.9];
        let action = [0.3, -0.2, 0.5, 0.1];
        let s = Sample {
            obs: obs.clone(),
            action,
            log_prob: policy.log_prob(&obs, &action) + 0.05,
            advantage: 1.3,
            ret: 0.0,
        };
        let loss = |p: &GaussianPolicy| -(p.log_prob(&obs, &action) - s.log_prob).exp() * s.advantage;

        let n_mean = policy.mean.n_params();
        let (mu, tape) = policy.mean.forward(&obs);
        let ratio = (gaussian_log_prob(&mu, &policy.log_std, -5.0, &action) - s.log_prob).exp();
        let dlogp = -ratio * s.advantage;
        let mut pg = vec![0.0; policy.n_params()];
        let mut grad_mu = [0.0; 4];
        for d in 0..4 {
            let var = (2.0 * policy.log_std[d]).exp();
            let diff = action[d] - mu[d];
            grad_mu[d] = dlogp * diff / var;
            pg[n_mean + d] = dlogp * (diff * diff / var - 1.0);
        }
        policy.mean.backward(&tape, &grad_mu, &mut pg[..n_mean]);

        let base = policy.params();
        let h = 1e-6;
        for i in (0..base.len()).step_by(3) {
            let mut up = base.clone();
            up[i] += h;
            let mut down = base.clone();
            down[i] -= h;
            policy.set_params(&up);
            let lu = loss(&policy);
            policy.set_params(&down);
            let ld = loss(&policy);
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - pg[i]).abs() < 1e-6, "param {i}: {fd} vs {}", pg[i]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip_ratio: 0.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { hidden_sizes: vec![0], ..PpoConfig::default() }.validate().is_err());
    }
}
