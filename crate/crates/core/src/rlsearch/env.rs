//! Code-search environment.
//!
//! An action is four real numbers: the coefficients of `|0⟩`, `|4⟩` in
//! `|0_L⟩` and of `|2⟩`, `|6⟩` in `|1_L⟩`, each pair normalized on use.
//! A step builds the code and its engineered jump, evolves the qubit-coupled
//! model to the reference time and observes six fidelities.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codes::{code_pair_from_coeffs, engineered_jump, CodePair};
use crate::dynamics::OdeOptions;
use crate::error::{Error, Result};
use crate::fidelity::{bloch_grid, break_even_mean_fidelity, LogicalChannel};
use crate::model::full_model;

/// Angular quantization step of the evaluation cache, in radians.
pub const CACHE_GRID: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObservationKind {
    /// `Tr(ρ_j M(ρ_j))` for the six Pauli eigenstates.
    #[default]
    SixStates,
    /// State fidelities on an `n_theta × n_phi` Bloch grid.
    BlochGrid { n_theta: usize, n_phi: usize },
}

impl ObservationKind {
    pub fn len(&self) -> usize {
        match *self {
            ObservationKind::SixStates => 6,
            ObservationKind::BlochGrid { n_theta, n_phi } => n_theta * n_phi,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rates are in units of `γa`, so `gamma_t` is `γa·t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub truncation: usize,
    pub steps_per_episode: usize,
    pub gamma_t: f64,
    pub g: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub observation: ObservationKind,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            truncation: 6,
            steps_per_episode: 11,
            gamma_t: 0.6,
            g: 400.0,
            gamma_a: 1.0,
            gamma_b: 1750.0,
            observation: ObservationKind::SixStates,
            rtol: 1e-6,
            atol: 1e-8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_episode == 0 {
            return Err(Error::InvalidParameter("steps_per_episode must be at least 1".into()));
        }
        if self.truncation < 6 {
            return Err(Error::TruncationTooSmall { truncation: self.truncation, required: 6 });
        }
        if !(self.gamma_t.is_finite() && self.gamma_t > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma_t must be positive, got {}", self.gamma_t)));
        }
        for (name, x) in [("g", self.g), ("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {x}")));
            }
        }
        if self.observation.is_empty() {
            return Err(Error::InvalidParameter("observation grid is empty".into()));
        }
        Ok(())
    }

    /// Mean fidelity of the unprotected encoding at the reference time.
    pub fn break_even(&self) -> f64 {
        break_even_mean_fidelity(self.gamma_a * self.gamma_t)
    }

    /// With every rate zero the environment reduces to the identity
    /// channel, a diagnostic mode.
    pub fn is_decoupled(&self) -> bool {
        self.g == 0.0 && self.gamma_a == 0.0 && self.gamma_b == 0.0
    }
}

/// Normalized codeword coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Coefficients of `|0⟩`, `|4⟩`.
    pub c0: [f64; 2],
    /// Coefficients of `|2⟩`, `|6⟩`.
    pub c1: [f64; 2],
}

/// Angle of a coefficient pair on the half circle `(-π/2, π/2]`, snapped
/// to the cache grid; `v` and `-v` encode the same codeword.
fn grid_angle(v: [f64; 2]) -> Option<i64> {
    let n = v[0].hypot(v[1]);
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    let mut theta = v[1].atan2(v[0]);
    if theta <= -PI / 2.0 {
        theta += PI;
    } else if theta > PI / 2.0 {
        theta -= PI;
    }
    Some((theta / CACHE_GRID).round() as i64)
}

fn from_grid(k: i64) -> [f64; 2] {
    let theta = k as f64 * CACHE_GRID;
    [theta.cos(), theta.sin()]
}

impl Action {
    /// Normalizes each codeword pair of `raw = [c0_0, c0_4, c1_2, c1_6]`,
    /// fixes the global sign and snaps the angle to the cache grid.
    /// `None` when a pair is zero or not finite.
    pub fn from_raw(raw: &[f64; 4]) -> Option<Self> {
        let k0 = grid_angle([raw[0], raw[1]])?;
        let k1 = grid_angle([raw[2], raw[3]])?;
        Some(Self { c0: from_grid(k0), c1: from_grid(k1) })
    }

    pub fn raw(&self) -> [f64; 4] {
        [self.c0[0], self.c0[1], self.c1[0], self.c1[1]]
    }

    fn key(&self) -> [i64; 2] {
        [grid_angle(self.c0).unwrap_or(0), grid_angle(self.c1).unwrap_or(0)]
    }

    pub fn code(&self, truncation: usize) -> Result<CodePair> {
        code_pair_from_coeffs(&self.c0, &self.c1, truncation)
    }

    /// `|0_L⟩ = |4⟩`, `|1_L⟩ = |2⟩` (to grid precision).
    pub fn rl() -> Self {
        Self::from_raw(&[0.0, 1.0, 1.0, 0.0]).expect("nonzero pairs")
    }

    /// Uniform on each coefficient circle.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let a = rng.random_range(0.0..2.0 * PI);
        let b = rng.random_range(0.0..2.0 * PI);
        Self::from_raw(&[a.cos(), a.sin(), b.cos(), b.sin()]).expect("unit vectors")
    }
}

/// Result of evaluating one code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub observations: Vec<f64>,
    pub mean_fidelity: f64,
    /// Mean-fidelity margin over break-even, `F̄ − F̄_be`.
    pub epsilon: f64,
    /// A codeword had no error state, so no recovery could be built.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub observations: Vec<f64>,
    pub action: Action,
    pub epsilon: f64,
    pub mean_fidelity: f64,
    /// False when the action could not be turned into a code with a
    /// recovery operator.
    pub valid: bool,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Reward for moving from margin `eps_prev` to `eps_next`: `1000·ε` on
/// improvement, `100·ε` otherwise (ties included), `0` at or below
/// break-even.
pub fn reward(eps_prev: f64, eps_next: f64) -> f64 {
    if eps_next <= 0.0 {
        0.0
    } else if eps_next > eps_prev {
        1000.0 * eps_next
    } else {
        100.0 * eps_next
    }
}

/// Environment with a shared memo of evaluated codes.
#[derive(Debug)]
pub struct Environment {
    config: EnvConfig,
    break_even: f64,
    opts: OdeOptions,
    cache: Mutex<HashMap<[i64; 2], Evaluation>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let opts = OdeOptions { rtol: config.rtol, atol: config.atol, ..OdeOptions::default() };
        Ok(Self {
            break_even: config.break_even(),
            config,
            opts,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn break_even(&self) -> f64 {
        self.break_even
    }

    pub fn observation_len(&self) -> usize {
        self.config.observation.len()
    }

    /// `(cache hits, dynamics evaluations)`.
    pub fn counters(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }

    fn channel(&self, code: &CodePair) -> Result<Option<LogicalChannel>> {
        if self.config.is_decoupled() {
            return Ok(Some(LogicalChannel::identity(code.clone())));
        }
        let recovery = match engineered_jump(code) {
            Ok(l) => l,
            Err(Error::UndefinedErrorBasis { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let c = &self.config;
        let sys = full_model(&recovery, c.g, c.gamma_a, c.gamma_b)?;
        let mut channels = sys.logical_channels(code, &[0.0, c.gamma_t], &self.opts)?;
        Ok(channels.pop())
    }

    fn observe(&self, channel: &LogicalChannel) -> Result<Vec<f64>> {
        Ok(match self.config.observation {
            ObservationKind::SixStates => channel.observations().to_vec(),
            ObservationKind::BlochGrid { n_theta, n_phi } => {
                bloch_grid(channel, n_theta, n_phi)?.iter().map(|s| s.fidelity).collect()
            }
        })
    }

    /// Evaluates a code without touching the memo.
    pub fn evaluate_uncached(&self, action: &Action) -> Result<Evaluation> {
        let code = action.code(self.config.truncation)?;
        match self.channel(&code)? {
            Some(ch) => {
                let observations = self.observe(&ch)?;
                let mean_fidelity = ch.mean_fidelity().clamp(0.0, 1.0);
                Ok(Evaluation {
                    observations,
                    mean_fidelity,
                    epsilon: mean_fidelity - self.break_even,
                    degenerate: false,
                })
            }
            None => Ok(Evaluation {
                observations: vec![0.0; self.observation_len()],
                mean_fidelity: 0.0,
                epsilon: -self.break_even,
                degenerate: true,
            }),
        }
    }

    pub fn evaluate(&self, action: &Action) -> Result<Evaluation> {
        let key = action.key();
        if let Some(e) = self.cache.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(e.clone());
        }
        let e = self.evaluate_uncached(action)?;
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.cache.lock().expect("cache lock").insert(key, e.clone());
        Ok(e)
    }

    fn state_for(&self, action: Action, step: usize) -> Result<EnvState> {
        let e = self.evaluate(&action)?;
        Ok(EnvState {
            observations: e.observations,
            action,
            epsilon: e.epsilon,
            mean_fidelity: e.mean_fidelity,
            valid: !e.degenerate,
            step,
        })
    }

    /// Random initial code and its observations.
    pub fn reset<R: Rng>(&self, rng: &mut R) -> Result<EnvState> {
        self.state_for(Action::random(rng), 0)
    }

    /// Applies `raw` (unnormalized coefficients). A zero coefficient pair
    /// or a code without an error state earns no reward.
    pub fn step(&self, state: &EnvState, raw: &[f64; 4]) -> Result<StepOutcome> {
        if state.step >= self.config.steps_per_episode {
            return Err(Error::InvalidParameter(format!("episode already finished after {} steps", state.step)));
        }
        let step = state.step + 1;
        let done = step == self.config.steps_per_episode;
        let Some(action) = Action::from_raw(raw) else {
            let next = EnvState {
                observations: vec![0.0; self.observation_len()],
                action: state.action,
                epsilon: -self.break_even,
                mean_fidelity: 0.0,
                valid: false,
                step,
            };
            return Ok(StepOutcome { state: next, reward: 0.0, done });
        };
        let next = self.state_for(action, step)?;
        let r = if next.valid { reward(state.epsilon, next.epsilon) } else { 0.0 };
        Ok(StepOutcome { state: next, reward: r, done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::rl_code;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_scheme() {
        assert!((reward(0.03, 0.05) - 50.0).abs() < 1e-12);
        assert!((reward(0.05, 0.02) - 2.0).abs() < 1e-12);
        assert_eq!(reward(0.05, -0.1), 0.0);
        assert_eq!(reward(-0.2, 0.0), 0.0);
        assert!((reward(0.04, 0.04) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_scale_invariant_and_idempotent() {
        let raw = [0.3, -1.2, 2.0, 0.1];
        let a = Action::from_raw(&raw).unwrap();
        let b = Action::from_raw(&raw.map(|x| 2.0 * x)).unwrap();
        let c = Action::from_raw(&a.raw()).unwrap();
        let d = Action::from_raw(&raw.map(|x| -x)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a, d);
        assert!(Action::from_raw(&[0.0, 0.0, 1.0, 0.0]).is_none());
        assert!(Action::from_raw(&[f64::NAN, 1.0, 1.0, 0.0]).is_none());
        let rl = Action::rl();
        assert!((rl.c0[1] - 1.0).abs() < 1e-12 && (rl.c1[0] - 1.0).abs() < 1e-12);
        assert_eq!(Action::from_raw(&[0.0, -3.0, -2.0, 0.0]).unwrap(), rl);
    }

    #[test]
    fn decoupled_environment_is_identity() {
        let env = Environment::new(EnvConfig { g: 0.0, gamma_a: 0.0, gamma_b: 0.0, ..EnvConfig::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = env.reset(&mut rng).unwrap();
        assert!(s.observations.iter().all(|&o| (o - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reset_is_deterministic() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observations.len(), 6);
        assert!(a.observations.iter().all(|o| (0.0..=1.0).contains(o)));
        assert_eq!(env.counters(), (1, 1));
    }

    #[test]
    fn rl_action_matches_direct_evaluation() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let e = env.evaluate(&Action::rl()).unwrap();
        let again = env.evaluate_uncached(&Action::rl()).unwrap();
        for (x, y) in e.observations.iter().zip(&again.observations) {
            assert!((x - y).abs() < 1e-10);
        }
        let mean = e.observations.iter().sum::<f64>() / 6.0;
        assert!((mean - e.mean_fidelity).abs() < 1e-12);
        let code = rl_code(6).unwrap();
        let sys = full_model(&engineered_jump(&code).unwrap(), 400.0, 1.0, 1750.0).unwrap();
        let direct = sys.mean_fidelities(&code, &[0.0, 0.6], &OdeOptions::default()).unwrap()[1];
        assert!((e.mean_fidelity - direct).abs() < 1e-6, "{} vs {direct}", e.mean_fidelity);
        assert!(e.epsilon > 0.09);
    }

    #[test]
    fn degenerate_code_earns_nothing() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let s = env.reset(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // |0_L⟩ = |0⟩ has no error state
        let out = env.step(&s, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
        let zero = env.step(&s, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(zero.reward, 0.0);
    }

    #[test]
    fn episode_ends_after_k_steps() {
        let env = Environment::new(EnvConfig { steps_per_episode: 2, ..EnvConfig::default() }).unwrap();
        let s0 = env.reset(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s1 = env.step(&s0, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(!s1.done);
        let s2 = env.step(&s1.state, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(s2.done);
        // repeating the same code is a tie: the 100x branch
        assert!((s2.reward - 100.0 * s1.state.epsilon).abs() < 1e-12);
        assert!(env.step(&s2.state, &[0.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn rl_code_is_a_local_optimum() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let base = env.evaluate(&Action::rl()).unwrap().mean_fidelity;
        let raw = Action::rl().raw();
        for i in 0..4 {
            for s in [-0.05, 0.05] {
                let mut p = raw;
                p[i] += s;
                let f = env.evaluate(&Action::from_raw(&p).unwrap()).unwrap().mean_fidelity;
                assert!(f <= base + 1e-9, "coordinate {i} step {s}: {f} > {base}");
            }
        }
    }

    #[test]
    fn bloch_grid_observation() {
        let cfg =
            EnvConfig { observation: ObservationKind::BlochGrid { n_theta: 3, n_phi: 4 }, ..EnvConfig::default() };
        let env = Environment::new(cfg).unwrap();
        let e = env.evaluate(&Action::rl()).unwrap();
        assert_eq!(e.observations.len(), 12);
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig { steps_per_episode: 0, ..EnvConfig::default() }.validate().is_err());
        assert!(EnvConfig { truncation: 5, ..EnvConfig::default() }.validate().is_err());
        assert!((EnvConfig::default().break_even() - 0.838408).abs() < 5e-7);
        let json = serde_json::to_string(&EnvConfig::default()).unwrap();
        let back: EnvConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, EnvConfig::default());
    }
}
