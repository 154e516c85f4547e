//! Off-policy centralized-critic learner over a shared replay ring.
//!
//! Each agent owns a decentralized policy over its own observation and a
//! critic over the joint observation-action concatenation. Discrete actions
//! enter the critic as one-hot blocks; the actor loss passes gradient through
//! the hard one-hot with the softmax Jacobian (straight-through estimator).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::replay::{Experience, ReplayBuffer, SharedReplay};
use super::{argmax, EpisodeTracker, Fingerprint, Hyperparams};
use crate::comm::joint_row;
use crate::envs::{JointAction, MarkovGame};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, softmax_row, Activation, GradStore, Mlp, OptimizerState, Tensor2};
use crate::profiler::{Category, Phase, Recorder, TimingBreakdown};

/// Logit penalty weight in the actor loss.
pub const LOGIT_REG: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaddpgAgent {
    pub policy: Mlp,
    pub critic: Mlp,
    pub target_policy: Mlp,
    pub target_critic: Mlp,
    pub policy_opt: OptimizerState,
    pub critic_opt: OptimizerState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaddpgModels {
    pub agents: Vec<MaddpgAgent>,
    pub obs_widths: Vec<usize>,
    pub n_actions: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentLosses {
    pub critic: f64,
    pub actor: f64,
}

impl MaddpgModels {
    pub fn new<R: Rng + ?Sized>(obs_widths: &[usize], n_actions: usize, hidden: usize, lr: f64, rng: &mut R) -> Self {
        let joint = obs_widths.iter().sum::<usize>() + obs_widths.len() * n_actions;
        let agents = obs_widths
            .iter()
            .map(|&o| {
                let policy = Mlp::new(&[o, hidden, hidden, n_actions], Activation::Tanh, Activation::Identity, rng);
                let critic = Mlp::new(&[joint, hidden, hidden, 1], Activation::Tanh, Activation::Identity, rng);
                MaddpgAgent {
                    policy_opt: OptimizerState::new(&policy.params, lr),
                    critic_opt: OptimizerState::new(&critic.params, lr),
                    target_policy: policy.clone(),
                    target_critic: critic.clone(),
                    policy,
                    critic,
                }
            })
            .collect();
        Self {
            agents,
            obs_widths: obs_widths.to_vec(),
            n_actions,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn joint_width(&self) -> usize {
        self.obs_widths.iter().sum::<usize>() + self.n_agents() * self.n_actions
    }

    /// Column where agent `i`'s one-hot action block starts in the critic input.
    pub fn action_offset(&self, i: usize) -> usize {
        self.obs_widths.iter().sum::<usize>() + i * self.n_actions
    }

    pub fn policies(&self) -> Vec<Mlp> {
        self.agents.iter().map(|a| a.policy.clone()).collect()
    }

    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        for a in &self.agents {
            for m in [&a.policy, &a.critic, &a.target_policy, &a.target_critic] {
                fp.params(&m.params);
            }
        }
    }
}

/// Destination for freshly collected transitions.
pub trait ExperienceSink {
    fn push(&mut self, e: Experience);
}

impl ExperienceSink for ReplayBuffer {
    fn push(&mut self, e: Experience) {
        self.insert(e);
    }
}

impl ExperienceSink for Vec<Experience> {
    fn push(&mut self, e: Experience) {
        Vec::push(self, e);
    }
}

/// Staging handle of one rollout worker on a [`SharedReplay`].
pub struct Staged<'a> {
    pub shared: &'a SharedReplay,
    pub worker: usize,
}

impl ExperienceSink for Staged<'_> {
    fn push(&mut self, e: Experience) {
        self.shared.stage(self.worker, e);
    }
}

fn experience_bytes(e: &Experience) -> u64 {
    let obs: usize = e.obs.iter().chain(&e.next_obs).map(|o| o.vector.len()).sum();
    ((obs + 2 * e.rewards.len() + 1) * 8) as u64
}

/// Runs `steps` environment steps with epsilon-greedy decentralized policies.
#[allow(clippy::too_many_arguments)]
pub fn maddpg_sample<E: MarkovGame, S: ExperienceSink, R: Rng>(
    policies: &[Mlp],
    env: &mut E,
    sink: &mut S,
    steps: usize,
    noise: f64,
    rng: &mut R,
    rec: &mut Recorder,
    episodes: &mut EpisodeTracker,
) -> Result<usize> {
    let n = env.n_agents();
    if policies.len() != n {
        return Err(Error::dim("maddpg_sample", format!("{} policies", policies.len()), format!("{n} agents")));
    }
    let space = env.n_actions();
    for _ in 0..steps {
        if env.is_done() {
            rec.span(Category::EnvStep, || env.reset_episode());
        }
        let obs = rec.span(Category::EnvStep, || env.observe_all());
        let actions = rec.span(Category::PolicyInference, || -> Result<Vec<usize>> {
            let mut out = Vec::with_capacity(n);
            for (p, o) in policies.iter().zip(&obs) {
                let logits = p.infer(&Tensor2::row_vector(&o.vector))?;
                let greedy = argmax(logits.data());
                let u: f64 = rng.gen();
                out.push(if u < noise { rng.gen_range(0..space) } else { greedy });
            }
            Ok(out)
        })?;
        let joint = JointAction::uniform_space(actions, space)?;
        let (result, next_obs) = rec.span(Category::EnvStep, || -> Result<_> {
            let r = env.step(&joint)?;
            Ok((r, env.observe_all()))
        })?;
        episodes.record(&result.rewards, result.done);
        let e = Experience {
            obs,
            actions: joint,
            rewards: result.rewards,
            next_obs,
            done: result.done,
        };
        rec.add_comm_bytes(experience_bytes(&e));
        rec.span(Category::Communication, || sink.push(e));
    }
    Ok(steps)
}

/// Minibatch in critic-ready form.
#[derive(Clone, Debug)]
pub struct CriticBatch {
    /// Per agent, `B × obs_width` current observations.
    pub obs: Vec<Tensor2>,
    /// `B × joint` with buffer actions.
    pub joint: Tensor2,
    /// `B × joint` with next observations and target-policy actions.
    pub next_joint: Tensor2,
    /// Per agent, `B` rewards.
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<bool>,
}

/// Assembles joint critic inputs for a minibatch; the concatenations are
/// charged to Communication and the target-policy passes to GradientUpdate.
pub fn assemble_batch(models: &MaddpgModels, batch: &[&Experience], rec: &mut Recorder) -> Result<CriticBatch> {
    let n = models.n_agents();
    let space = models.n_actions;
    let spaces = vec![space; n];
    let b = batch.len();
    let joint = rec.span(Category::Communication, || -> Result<Tensor2> {
        let rows: Vec<Vec<f64>> = batch
            .iter()
            .map(|e| {
                let o: Vec<&[f64]> = e.obs.iter().map(|o| o.vector.as_slice()).collect();
                joint_row(&o, &e.actions.actions, &spaces)
            })
            .collect();
        Tensor2::from_rows(&rows)
    })?;
    let obs: Vec<Tensor2> = (0..n)
        .map(|i| Tensor2::from_rows(&batch.iter().map(|e| e.obs[i].vector.as_slice()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let target_actions = rec.span(Category::GradientUpdate, || -> Result<Vec<Vec<usize>>> {
        (0..n)
            .map(|i| {
                let next = Tensor2::from_rows(&batch.iter().map(|e| e.next_obs[i].vector.as_slice()).collect::<Vec<_>>())?;
                let logits = models.agents[i].target_policy.infer(&next)?;
                Ok(logits.iter_rows().map(argmax).collect())
            })
            .collect()
    })?;
    let next_joint = rec.span(Category::Communication, || -> Result<Tensor2> {
        let rows: Vec<Vec<f64>> = batch
            .iter()
            .enumerate()
            .map(|(r, e)| {
                let o: Vec<&[f64]> = e.next_obs.iter().map(|o| o.vector.as_slice()).collect();
                let a: Vec<usize> = target_actions.iter().map(|t| t[r]).collect();
                joint_row(&o, &a, &spaces)
            })
            .collect();
        Tensor2::from_rows(&rows)
    })?;
    rec.add_comm_bytes(2 * (n * b * models.joint_width() * 8) as u64);
    Ok(CriticBatch {
        obs,
        joint,
        next_joint,
        rewards: (0..n).map(|i| batch.iter().map(|e| e.rewards[i]).collect()).collect(),
        done: batch.iter().map(|e| e.done).collect(),
    })
}

/// TD targets `y = r + γ(1 − done)·Q'(s', μ'(s'))` for agent `i`.
pub fn critic_targets(agent: &MaddpgAgent, batch: &CriticBatch, i: usize, gamma: f64) -> Result<Vec<f64>> {
    let q_next = agent.target_critic.infer(&batch.next_joint)?;
    Ok(batch.rewards[i]
        .iter()
        .zip(&batch.done)
        .zip(q_next.data())
        .map(|((&r, &d), &q)| r + if d { 0.0 } else { gamma * q })
        .collect())
}

/// Mean squared TD error and its gradient.
pub fn critic_loss(critic: &Mlp, joint: &Tensor2, targets: &[f64]) -> Result<(f64, GradStore)> {
    let (q, cache) = critic.forward(joint)?;
    let b = targets.len() as f64;
    let mut dq = Tensor2::zeros(q.rows(), 1);
    let mut loss = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let e = q.get(r, 0) - y;
        loss += e * e / b;
        dq.set(r, 0, 2.0 * e / b);
    }
    let (_, g) = critic.backward(&dq, &cache)?;
    Ok((loss, g))
}

/// Straight-through offset `onehot(argmax ℓ) − softmax(ℓ)` for the given policy.
pub fn straight_through_offset(policy: &Mlp, obs: &Tensor2) -> Result<Tensor2> {
    let logits = policy.infer(obs)?;
    let mut off = Tensor2::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax_row(logits.row(r));
        let a = argmax(logits.row(r));
        for (c, pv) in p.iter().enumerate() {
            off.set(r, c, if c == a { 1.0 } else { 0.0 } - pv);
        }
    }
    Ok(off)
}

/// Actor loss `−mean Q(s, a_{−i}, softmax(ℓ) + offset) + LOGIT_REG·mean(ℓ²)`.
///
/// With `offset` from [`straight_through_offset`] at the same parameters the
/// forward value uses the hard one-hot action.
pub fn actor_loss(policy: &Mlp, critic: &Mlp, obs: &Tensor2, joint: &Tensor2, action_col: usize, offset: &Tensor2) -> Result<(f64, GradStore)> {
    let (logits, pcache) = policy.forward(obs)?;
    let (b, a) = logits.shape();
    if offset.shape() != (b, a) {
        return Err(Error::dim("actor_loss", offset.shape_str(), logits.shape_str()));
    }
    let probs: Vec<Vec<f64>> = logits.iter_rows().map(softmax_row).collect();
    let mut x = joint.clone();
    for r in 0..b {
        let row = x.row_mut(r);
        for c in 0..a {
            row[action_col + c] = probs[r][c] + offset.get(r, c);
        }
    }
    let (q, ccache) = critic.forward(&x)?;
    let bf = b as f64;
    let mut loss = -q.data().iter().sum::<f64>() / bf;
    let dq = Tensor2::from_vec(b, 1, vec![-1.0 / bf; b])?;
    let (dx, _) = critic.backward(&dq, &ccache)?;
    let mut dl = Tensor2::zeros(b, a);
    let reg_scale = 2.0 * LOGIT_REG / (bf * a as f64);
    for r in 0..b {
        let p = &probs[r];
        let g = &dx.row(r)[action_col..action_col + a];
        let dot: f64 = g.iter().zip(p).map(|(u, v)| u * v).sum();
        for c in 0..a {
            let l = logits.get(r, c);
            loss += LOGIT_REG * l * l / (bf * a as f64);
            dl.set(r, c, p[c] * (g[c] - dot) + reg_scale * l);
        }
    }
    let (_, g) = policy.backward(&dl, &pcache)?;
    Ok((loss, g))
}

fn update_agent(models_meta: (&[usize], usize), agent: &mut MaddpgAgent, i: usize, batch: &CriticBatch, hyper: &Hyperparams, rec: &mut Recorder) -> Result<AgentLosses> {
    let (obs_widths, space) = models_meta;
    let action_col = obs_widths.iter().sum::<usize>() + i * space;
    rec.span(Category::GradientUpdate, || -> Result<AgentLosses> {
        let y = critic_targets(agent, batch, i, hyper.gamma)?;
        let (lc, gc) = critic_loss(&agent.critic, &batch.joint, &y)?;
        adam_step(&mut agent.critic.params, &gc, &mut agent.critic_opt)?;
        let offset = straight_through_offset(&agent.policy, &batch.obs[i])?;
        let (la, ga) = actor_loss(&agent.policy, &agent.critic, &batch.obs[i], &batch.joint, action_col, &offset)?;
        adam_step(&mut agent.policy.params, &ga, &mut agent.policy_opt)?;
        agent.target_critic.params.soft_update_from(&agent.critic.params, hyper.tau)?;
        agent.target_policy.params.soft_update_from(&agent.policy.params, hyper.tau)?;
        Ok(AgentLosses { critic: lc, actor: la })
    })
}

/// One gradient step for every agent on a shared minibatch; `None` while the
/// buffer holds fewer than `batch` entries.
pub fn maddpg_update<R: Rng>(
    models: &mut MaddpgModels,
    buffer: &ReplayBuffer,
    hyper: &Hyperparams,
    training_threads: usize,
    rng: &mut R,
    rec: &mut Recorder,
) -> Result<Option<Vec<AgentLosses>>> {
    let idx = match rec.span(Category::BufferOps, || buffer.sample_indices(hyper.batch, rng)) {
        Some(idx) => idx,
        None => return Ok(None),
    };
    let picked: Vec<&Experience> = rec.span(Category::BufferOps, || idx.iter().map(|&k| buffer.slot(k)).collect());
    let batch = assemble_batch(models, &picked, rec)?;
    let meta = (models.obs_widths.clone(), models.n_actions);
    let n = models.n_agents();
    let threads = training_threads.clamp(1, n.max(1));
    if threads == 1 {
        let mut out = Vec::with_capacity(n);
        for (i, agent) in models.agents.iter_mut().enumerate() {
            out.push(update_agent((&meta.0, meta.1), agent, i, &batch, hyper, rec)?);
        }
        return Ok(Some(out));
    }
    let chunk = n.div_ceil(threads);
    let results: Vec<Result<(Vec<AgentLosses>, Recorder)>> = std::thread::scope(|s| {
        let handles: Vec<_> = models
            .agents
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, agents)| {
                let (batch, meta, mut local) = (&batch, &meta, rec.fresh());
                s.spawn(move || {
                    let mut out = Vec::with_capacity(agents.len());
                    for (k, agent) in agents.iter_mut().enumerate() {
                        out.push(update_agent((&meta.0, meta.1), agent, c * chunk + k, batch, hyper, &mut local)?);
                    }
                    Ok((out, local))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Runtime("training thread panicked".into()))))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for r in results {
        let (losses, local) = r?;
        rec.merge(&local);
        out.extend(losses);
    }
    Ok(Some(out))
}

struct Worker<E> {
    env: E,
    rng: ChaCha8Rng,
    episodes: EpisodeTracker,
}

/// Overlapped off-policy training: in each iteration the rollout workers fill
/// their step quota while the learner takes gradient steps on the ring as
/// committed at the end of the previous iteration.
pub struct MaddpgRun<E> {
    pub models: MaddpgModels,
    replay: SharedReplay,
    workers: Vec<Worker<E>>,
    learner_rng: ChaCha8Rng,
    hyper: Hyperparams,
    training_threads: usize,
    profile: bool,
    pending_samples: usize,
    carry: f64,
    experiences: Fingerprint,
    env_steps: u64,
}

impl<E: MarkovGame> MaddpgRun<E> {
    /// `make_env(worker_seed)` builds each worker's private environment.
    pub fn new(
        make_env: impl Fn(u64) -> Result<E>,
        rollout_threads: usize,
        training_threads: usize,
        hyper: Hyperparams,
        seed: u64,
        profile: bool,
    ) -> Result<Self> {
        hyper.validate()?;
        let workers: Vec<Worker<E>> = (0..rollout_threads)
            .map(|w| {
                let s = seed.wrapping_add(w as u64);
                Ok(Worker {
                    env: make_env(s)?,
                    rng: ChaCha8Rng::seed_from_u64(s ^ 0x5eed_0001),
                    episodes: EpisodeTracker::default(),
                })
            })
            .collect::<Result<_>>()?;
        let probe = &workers[0].env;
        let widths = vec![probe.obs_width(); probe.n_agents()];
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0x1ea7_0000);
        let models = MaddpgModels::new(&widths, probe.n_actions(), hyper.hidden, hyper.lr, &mut init);
        Ok(Self {
            models,
            replay: SharedReplay::new(hyper.buffer_capacity, rollout_threads)?,
            workers,
            learner_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x1ea7_0001),
            hyper,
            training_threads,
            profile,
            pending_samples: 0,
            carry: 0.0,
            experiences: Fingerprint::default(),
            env_steps: 0,
        })
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
        let budget = self.carry + self.pending_samples as f64 / self.hyper.batch as f64;
        let planned = budget.floor() as usize;
        self.carry = budget - planned as f64;
        let policies = self.models.policies();
        let quota = self.hyper.steps_per_thread;
        let noise = self.hyper.noise;
        let profile = self.profile;
        let (replay, hyper, threads) = (&self.replay, &self.hyper, self.training_threads);
        let (models, learner_rng) = (&mut self.models, &mut self.learner_rng);
        let start = Instant::now();
        type WorkerOut = Result<(Recorder, usize, Instant)>;
        let (sg, mu): (Vec<WorkerOut>, Result<(Recorder, usize, f64)>) = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .workers
                .iter_mut()
                .enumerate()
                .map(|(w, worker)| {
                    let policies = &policies;
                    s.spawn(move || -> WorkerOut {
                        let mut rec = Recorder::with_enabled(Phase::SampleGeneration, profile);
                        let mut sink = Staged { shared: replay, worker: w };
                        let k = maddpg_sample(policies, &mut worker.env, &mut sink, quota, noise, &mut worker.rng, &mut rec, &mut worker.episodes)?;
                        Ok((rec, k, Instant::now()))
                    })
                })
                .collect();
            let mu_start = Instant::now();
            let mut rec = Recorder::with_enabled(Phase::ModelUpdate, profile);
            let mut done = 0;
            let mu = (|| {
                for _ in 0..planned {
                    let ring = replay.read();
                    match maddpg_update(models, &ring, hyper, threads, learner_rng, &mut rec)? {
                        Some(_) => done += 1,
                        None => break,
                    }
                }
                Ok((rec, done, mu_start.elapsed().as_secs_f64()))
            })();
            let sg = handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Runtime("rollout worker panicked".into()))))
                .collect();
            (sg, mu)
        });
        let mut b = TimingBreakdown::new(iteration);
        let mut samples = 0;
        let mut sg_end = start;
        for r in sg {
            let (rec, k, end) = r?;
            b.absorb(&rec);
            samples += k;
            sg_end = sg_end.max(end);
        }
        let (rec, steps, t_mu) = mu?;
        b.absorb(&rec);
        let mut commit_rec = Recorder::with_enabled(Phase::SampleGeneration, profile);
        let committed = commit_rec.span(Category::Communication, || self.replay.commit());
        b.absorb(&commit_rec);
        for e in &committed {
            self.experiences.experience(e);
        }
        b.t_sg = sg_end.duration_since(start).as_secs_f64();
        b.t_mu = t_mu;
        b.wallclock = start.elapsed().as_secs_f64();
        b.learner_steps = steps as f64;
        b.samples = samples as u64;
        self.pending_samples = committed.len();
        self.env_steps += samples as u64;
        Ok(b)
    }

    pub fn episode_rewards(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.workers {
            out.extend_from_slice(&w.episodes.completed);
        }
        out
    }

    pub fn experience_fingerprint(&self) -> u64 {
        self.experiences.0
    }

    pub fn param_fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::default();
        self.models.fingerprint(&mut fp);
        fp.0
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }
}
