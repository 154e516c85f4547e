//! The three reference training pipelines and their shared pieces: returns,
//! experience storage, the consumed-once on-policy batch and hyperparameters.

pub mod maddpg;
pub mod neurcomm;
pub mod tom2c;

mod replay;

pub use replay::{Experience, ReplayBuffer, SharedReplay};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::envs::{JointAction, MarkovGame};
use crate::numerics::ParamStore;

/// Training hyperparameters. Every field has a default and can be overridden from config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub comm_threshold: f64,
    pub entropy_coef: f64,
    pub sparsity_coef: f64,
    /// Exploration rate of the epsilon-greedy off-policy actors.
    pub noise: f64,
    pub belief_dim: usize,
    /// Environment steps each rollout thread collects per off-policy iteration.
    pub steps_per_thread: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            gamma: 0.95,
            tau: 0.01,
            batch: 256,
            buffer_capacity: 50_000,
            horizon: 32,
            hidden: 64,
            comm_threshold: 0.5,
            entropy_coef: 0.01,
            sparsity_coef: 1e-3,
            noise: 0.1,
            belief_dim: 64,
            steps_per_thread: 64,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, rule: &str| Err(Error::Config(format!("hyperparameters.{key} {rule}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.comm_threshold) {
            return bad("comm_threshold", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise", "must lie in [0, 1]");
        }
        if !(self.entropy_coef >= 0.0) || !(self.sparsity_coef >= 0.0) {
            return bad("entropy_coef/sparsity_coef", "must be non-negative");
        }
        for (key, v) in [
            ("batch", self.batch),
            ("buffer_capacity", self.buffer_capacity),
            ("hidden", self.hidden),
            ("belief_dim", self.belief_dim),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1");
            }
        }
        if self.batch > self.buffer_capacity {
            return bad("batch", "must not exceed buffer_capacity");
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// `G_t = r_t + γ·G_{t+1}` with `G_T = bootstrap`.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    Ok(out)
}

/// As [`discounted_returns`], restarting at every step flagged done.
pub fn discounted_returns_masked(rewards: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if rewards.len() != dones.len() {
        return Err(Error::dim("discounted_returns", format!("{} rewards", rewards.len()), format!("{} flags", dones.len())));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for ((o, &r), &d) in out.iter_mut().zip(rewards).zip(dones).rev() {
        if d {
            g = 0.0;
        }
        g = r + gamma * g;
        *o = g;
    }
    Ok(out)
}

/// Trajectory data that may be consumed exactly once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnPolicyBatch<T> {
    segments: Vec<T>,
    consumed: bool,
}

impl<T> OnPolicyBatch<T> {
    pub fn new(segments: Vec<T>) -> Self {
        Self {
            segments,
            consumed: false,
        }
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> Result<&[T]> {
        if self.consumed {
            return Err(Error::Contract("on-policy batch already consumed".into()));
        }
        Ok(&self.segments)
    }

    /// Marks the batch consumed; a second call is a contract violation.
    pub fn consume(&mut self) -> Result<Vec<T>> {
        if self.consumed {
            return Err(Error::Contract("on-policy batch already consumed".into()));
        }
        self.consumed = true;
        Ok(std::mem::take(&mut self.segments))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability row by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// FNV-1a over 64-bit words, for bit-exact run comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint(pub u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    pub fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn reals(&mut self, xs: &[f64]) {
        self.word(xs.len() as u64);
        for x in xs {
            self.word(x.to_bits());
        }
    }

    pub fn params(&mut self, p: &ParamStore) {
        for l in &p.layers {
            self.reals(l.weights.data());
            self.reals(&l.bias);
        }
    }

    pub fn experience(&mut self, e: &Experience) {
        for o in e.obs.iter().chain(&e.next_obs) {
            self.reals(&o.vector);
        }
        for &a in &e.actions.actions {
            self.word(a as u64);
        }
        self.reals(&e.rewards);
        self.word(u64::from(e.done));
    }
}

/// Running per-episode return (mean over agents) of one environment stream.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTracker {
    current: f64,
    pub completed: Vec<f64>,
}

impl EpisodeTracker {
    pub fn record(&mut self, rewards: &[f64], done: bool) {
        self.current += rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        if done {
            self.completed.push(self.current);
            self.current = 0.0;
        }
    }
}

/// Per-episode mean-agent rewards of the uniform random policy over `episodes` full episodes.
pub fn random_policy_rewards<E: MarkovGame + ?Sized, R: Rng + ?Sized>(env: &mut E, episodes: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut tracker = EpisodeTracker::default();
    env.reset_episode();
    while tracker.completed.len() < episodes {
        let space = env.action_spaces();
        let chosen = space.iter().map(|&k| rng.gen_range(0..k)).collect();
        let out = env.step(&JointAction::new(chosen, space)?)?;
        tracker.record(&out.rewards, out.done);
        if out.done {
            env.reset_episode();
        }
    }
    Ok(tracker.completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_zero_returns_rewards() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.0, 0.0).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_discount_by_hand() {
        assert_eq!(discounted_returns(&[0.0, 0.0, 1.0], 0.5, 0.0).unwrap(), vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn gamma_of_one_is_rejected() {
        assert!(matches!(discounted_returns(&[1.0], 1.0, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn masked_returns_restart_at_episode_ends() {
        let g = discounted_returns_masked(&[1.0, 1.0, 1.0], &[false, true, false], 0.5, 2.0).unwrap();
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
    }

    #[test]
    fn consumed_batch_cannot_be_reused() {
        let mut b = OnPolicyBatch::new(vec![1, 2]);
        assert_eq!(b.consume().unwrap(), vec![1, 2]);
        assert!(matches!(b.consume(), Err(Error::Contract(_))));
        assert!(b.segments().is_err());
    }

    #[test]
    fn categorical_frequencies_follow_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..20_000 {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / 20_000.0 - q).abs() < 0.02);
        }
    }

    #[test]
    fn defaults_validate() {
        Hyperparams::default().validate().unwrap();
        let h = Hyperparams {
            batch: 10,
            buffer_capacity: 5,
            ..Hyperparams::default()
        };
        assert!(h.validate().is_err());
    }
}
