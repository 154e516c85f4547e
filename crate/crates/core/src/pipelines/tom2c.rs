//! On-policy centralized learner with a learnt per-step message graph.
//!
//! Per step every agent encodes its observation, infers intentions about the
//! others, scores every directed edge, and sends its intention row along the
//! edges that clear the threshold. A received message is weighted by its edge
//! score so the sender is trained by the policy objective; an L1 penalty on
//! the scores pushes the graph towards sparsity. All agents share parameters.
//!
//! Rollout workers run free against a versioned parameter board: round `r`
//! is generated from version `max(0, r − 1)` while the learner consumes round
//! `r − 1`, so sample generation overlaps training and stays deterministic.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{discounted_returns_masked, sample_categorical, EpisodeTracker, Fingerprint, Hyperparams, OnPolicyBatch};
use crate::comm::{propagate, sender_backward_into, sender_params, sender_scores, threshold_graph, tom_backward_into, tom_forward, tom_hidden_rows, tom_params, SenderCache, TomCache};
use crate::envs::{JointAction, MarkovGame};
use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::numerics::{adam_step, softmax_row, Activation, GradStore, Mlp, MlpCache, OptimizerState, ParamStore, Tensor2};
use crate::profiler::{Category, Phase, Recorder, TimingBreakdown};
use crate::runtime::{spawn_rollout_workers, WorkerPool};

/// Width of one observation entity (a 2-D position or offset).
pub const ENTITY: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tom2cModels {
    pub encoder: Mlp,
    pub tom: ParamStore,
    pub sender: ParamStore,
    pub decision: Mlp,
    pub critic: Mlp,
    pub n_agents: usize,
    pub obs_width: usize,
    pub n_actions: usize,
    pub hidden: usize,
    /// Width of each pair state in the intention net.
    pub tom_hidden: usize,
}

impl Tom2cModels {
    pub fn new<R: Rng + ?Sized>(n_agents: usize, obs_width: usize, n_actions: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if obs_width == 0 || obs_width % ENTITY != 0 {
            return Err(Error::Config(format!("observation width {obs_width} is not a whole number of {ENTITY}-wide entities")));
        }
        let e = hidden;
        let others = n_agents.saturating_sub(1);
        let tom_hidden = (hidden / 2).max(1);
        Ok(Self {
            encoder: Mlp::new(&[ENTITY, e, e], Activation::Tanh, Activation::Tanh, rng),
            tom: tom_params(e, tom_hidden, rng),
            sender: sender_params(n_agents, e, hidden, rng),
            decision: Mlp::new(&[e + others, hidden, hidden, n_actions], Activation::Tanh, Activation::Identity, rng),
            critic: Mlp::new(&[n_agents * e, hidden, hidden, 1], Activation::Tanh, Activation::Identity, rng),
            n_agents,
            obs_width,
            n_actions,
            hidden,
            tom_hidden,
        })
    }

    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        for p in [&self.encoder.params, &self.tom, &self.sender, &self.decision.params, &self.critic.params] {
            fp.params(p);
        }
    }

    fn stores(&self) -> [&ParamStore; 5] {
        [&self.encoder.params, &self.tom, &self.sender, &self.decision.params, &self.critic.params]
    }

    fn stores_mut(&mut self) -> [&mut ParamStore; 5] {
        [
            &mut self.encoder.params,
            &mut self.tom,
            &mut self.sender,
            &mut self.decision.params,
            &mut self.critic.params,
        ]
    }

    /// All parameters as one store, in encoder, tom, sender, decision, critic order.
    pub fn packed(&self) -> ParamStore {
        let mut layers = Vec::new();
        let mut kinds = Vec::new();
        for p in self.stores() {
            layers.extend(p.layers.iter().cloned());
            kinds.extend(p.kinds.iter().cloned());
        }
        ParamStore::new(layers, kinds)
    }

    /// Inverse of [`Tom2cModels::packed`].
    pub fn with_packed(&self, packed: &ParamStore) -> Self {
        let mut out = self.clone();
        let mut at = 0;
        for p in out.stores_mut() {
            let k = p.layers.len();
            p.layers.clone_from_slice(&packed.layers[at..at + k]);
            at += k;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tom2cOptim {
    pub states: Vec<OptimizerState>,
}

impl Tom2cOptim {
    pub fn new(models: &Tom2cModels, lr: f64) -> Self {
        Self {
            states: models.stores().iter().map(|p| OptimizerState::new(p, lr)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tom2cGrads {
    pub encoder: GradStore,
    pub tom: GradStore,
    pub sender: GradStore,
    pub decision: GradStore,
    pub critic: GradStore,
}

impl Tom2cGrads {
    pub fn zeros_for(m: &Tom2cModels) -> Self {
        Self {
            encoder: GradStore::zeros_for(&m.encoder.params),
            tom: GradStore::zeros_for(&m.tom),
            sender: GradStore::zeros_for(&m.sender),
            decision: GradStore::zeros_for(&m.decision.params),
            critic: GradStore::zeros_for(&m.critic.params),
        }
    }

    fn all(&self) -> [&GradStore; 5] {
        [&self.encoder, &self.tom, &self.sender, &self.decision, &self.critic]
    }

    /// Same layout as [`Tom2cModels::packed`].
    pub fn packed(&self) -> GradStore {
        let mut layers = Vec::new();
        let mut kinds = Vec::new();
        for g in self.all() {
            layers.extend(g.grads.layers.iter().cloned());
            kinds.extend(g.grads.kinds.iter().cloned());
        }
        GradStore {
            grads: ParamStore::new(layers, kinds),
            accumulated: true,
        }
    }
}

/// One recorded actor step, enough for the learner to recompute it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainStep {
    /// `n × obs_width`.
    pub obs: Tensor2,
    /// Intention-net pair states entering the step, `n·(n−1) × tom_hidden`.
    pub hidden: Tensor2,
    pub graph: CommGraph,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub done: bool,
    /// Critic values computed by the actor.
    pub values: Vec<f64>,
}

/// Frozen regression and advantage targets of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTarget {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Consecutive steps of one worker plus the critic bootstrap after the last.
#[derive(Clone, Debug)]
pub struct Fragment {
    pub worker: usize,
    pub round: usize,
    pub steps: Vec<TrainStep>,
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<f64>,
    pub gen_secs: f64,
    pub rec: Recorder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tom2cLosses {
    pub policy: f64,
    pub entropy: f64,
    pub critic: f64,
    pub sparsity: f64,
    pub total: f64,
}

struct Forward {
    entities: usize,
    enc_cache: MlpCache,
    enc: Tensor2,
    intentions: Tensor2,
    h_next: Tensor2,
    tom_cache: TomCache,
    scores: Tensor2,
    sender_cache: SenderCache,
    logits: Tensor2,
    dec_cache: MlpCache,
    values: Vec<f64>,
    critic_cache: MlpCache,
}

fn encode(m: &Tom2cModels, obs: &Tensor2) -> Result<(Tensor2, MlpCache, usize)> {
    let (n, w) = obs.shape();
    if w != m.obs_width {
        return Err(Error::dim("tom2c encoder", obs.shape_str(), format!("observation width {}", m.obs_width)));
    }
    let k = w / ENTITY;
    let ents = Tensor2::from_vec(n * k, ENTITY, obs.data().to_vec())?;
    let (e, cache) = m.encoder.forward(&ents)?;
    let width = e.cols();
    let inv = 1.0 / k as f64;
    let mut pooled = Tensor2::zeros(n, width);
    for i in 0..n {
        let dst = pooled.row_mut(i);
        for r in 0..k {
            for (d, &v) in dst.iter_mut().zip(e.row(i * k + r)) {
                *d += v * inv;
            }
        }
    }
    Ok((pooled, cache, k))
}

/// Row `i` is `[enc_i ‖ enc_{i+1} ‖ .. ‖ enc_{i−1}]`, so every agent sees itself first.
fn rotated(enc: &Tensor2) -> Tensor2 {
    let (n, e) = enc.shape();
    let mut out = Tensor2::zeros(n, n * e);
    for i in 0..n {
        let row = out.row_mut(i);
        for b in 0..n {
            row[b * e..(b + 1) * e].copy_from_slice(enc.row((i + b) % n));
        }
    }
    out
}

/// Score-weighted mean of the intention rows received along `graph`.
fn weighted_messages(graph: &CommGraph, scores: &Tensor2, intentions: &Tensor2, rec: &mut Recorder) -> Result<Tensor2> {
    let payloads: Vec<Vec<f64>> = intentions.iter_rows().map(<[f64]>::to_vec).collect();
    let inbox = propagate(graph, &payloads, rec)?;
    Ok(rec.span(Category::Communication, || {
        let (n, w) = intentions.shape();
        let mut out = Tensor2::zeros(n, w);
        for i in 0..n {
            let got = inbox.received(i);
            if got.is_empty() {
                continue;
            }
            let inv = 1.0 / got.len() as f64;
            let row = out.row_mut(i);
            for msg in got {
                let s = scores.get(msg.sender, i) * inv;
                for (d, &p) in row.iter_mut().zip(&msg.payload) {
                    *d += s * p;
                }
            }
        }
        out
    }))
}

/// Runs every network for one step. With `graph = None` the graph is taken
/// from the current scores; otherwise the supplied graph is kept fixed.
/// Encoder, decision and critic time is charged to `compute`.
fn forward(
    m: &Tom2cModels,
    obs: &Tensor2,
    hidden: &Tensor2,
    graph: Option<&CommGraph>,
    threshold: f64,
    compute: Category,
    rec: &mut Recorder,
) -> Result<(Forward, CommGraph)> {
    let (enc, enc_cache, entities) = rec.span(compute, || encode(m, obs))?;
    let (intentions, h_next, tom_cache, scores, sender_cache, graph) = rec.span(Category::Communication, || -> Result<_> {
        let (int, h, tc) = tom_forward(&enc, hidden, &m.tom)?;
        let (s, sc) = sender_scores(&int, &enc, &m.sender)?;
        let g = match graph {
            Some(g) => g.clone(),
            None => threshold_graph(&s, threshold)?,
        };
        Ok((int, h, tc, s, sc, g))
    })?;
    let msgs = weighted_messages(&graph, &scores, &intentions, rec)?;
    let (logits, dec_cache, values, critic_cache) = rec.span(compute, || -> Result<_> {
        let (l, dc) = m.decision.forward(&Tensor2::hcat(&[&enc, &msgs])?)?;
        let (v, cc) = m.critic.forward(&rotated(&enc))?;
        Ok((l, dc, v.into_vec(), cc))
    })?;
    Ok((
        Forward {
            entities,
            enc_cache,
            enc,
            intentions,
            h_next,
            tom_cache,
            scores,
            sender_cache,
            logits,
            dec_cache,
            values,
            critic_cache,
        },
        graph,
    ))
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Backpropagates `∂L/∂logits`, `∂L/∂values` and a uniform `∂L/∂score` on
/// every off-diagonal edge through one recomputed step.
#[allow(clippy::too_many_arguments)]
fn backward(
    m: &Tom2cModels,
    f: &Forward,
    graph: &CommGraph,
    d_logits: &Tensor2,
    d_values: &[f64],
    d_score: f64,
    grads: &mut Tom2cGrads,
    rec: &mut Recorder,
) -> Result<()> {
    let n = m.n_agents;
    let e = f.enc.cols();
    let others = n.saturating_sub(1);
    let (mut d_enc, d_msgs) = rec.span(Category::GradientUpdate, || -> Result<_> {
        let d_in = m.decision.backward_into(d_logits, &f.dec_cache, &mut grads.decision)?;
        let mut parts = d_in.hsplit(&[e, others])?;
        let d_msgs = parts.pop().expect("two parts");
        let mut d_enc = parts.pop().expect("two parts");
        let dv = Tensor2::from_vec(n, 1, d_values.to_vec())?;
        let d_rot = m.critic.backward_into(&dv, &f.critic_cache, &mut grads.critic)?;
        for i in 0..n {
            let row = d_rot.row(i);
            for b in 0..n {
                for (d, &v) in d_enc.row_mut((i + b) % n).iter_mut().zip(&row[b * e..(b + 1) * e]) {
                    *d += v;
                }
            }
        }
        Ok((d_enc, d_msgs))
    })?;
    rec.span(Category::Communication, || -> Result<()> {
        let mut d_scores = Tensor2::zeros(n, n);
        let mut d_int = Tensor2::zeros(n, others);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d_scores.set(i, j, d_score);
                }
            }
        }
        for i in 0..n {
            let senders = graph.in_neighbors(i);
            if senders.is_empty() {
                continue;
            }
            let inv = 1.0 / senders.len() as f64;
            let dm = d_msgs.row(i);
            for &j in &senders {
                let s = f.scores.get(j, i);
                let dot: f64 = dm.iter().zip(f.intentions.row(j)).map(|(a, b)| a * b).sum();
                d_scores.set(j, i, d_scores.get(j, i) + dot * inv);
                for (d, &g) in d_int.row_mut(j).iter_mut().zip(dm) {
                    *d += s * inv * g;
                }
            }
        }
        let (d_int2, d_feat) = sender_backward_into(&m.sender, &d_scores, &f.sender_cache, &mut grads.sender)?;
        d_int.add_assign(&d_int2)?;
        d_enc.add_assign(&d_feat)?;
        let d_enc_tom = tom_backward_into(&m.tom, &d_int, &f.tom_cache, &mut grads.tom)?;
        d_enc.add_assign(&d_enc_tom)?;
        Ok(())
    })?;
    rec.span(Category::GradientUpdate, || -> Result<()> {
        let k = f.entities;
        let inv = 1.0 / k as f64;
        let mut d_ent = Tensor2::zeros(n * k, e);
        for i in 0..n {
            for r in 0..k {
                for (d, &v) in d_ent.row_mut(i * k + r).iter_mut().zip(d_enc.row(i)) {
                    *d = v * inv;
                }
            }
        }
        m.encoder.backward_into(&d_ent, &f.enc_cache, &mut grads.encoder).map(|_| ())
    })
}

/// Full learner loss over recorded steps with frozen targets:
/// `mean(−logπ(a)·A) − β·mean(H) + mean((G − V)²) + λ·Σscores / T`.
pub fn tom2c_loss(
    m: &Tom2cModels,
    steps: &[TrainStep],
    targets: &[StepTarget],
    entropy_coef: f64,
    sparsity_coef: f64,
    rec: &mut Recorder,
) -> Result<(Tom2cLosses, Tom2cGrads)> {
    if steps.is_empty() {
        return Err(Error::Contract("learner update needs at least one step".into()));
    }
    if steps.len() != targets.len() {
        return Err(Error::dim("tom2c_loss", format!("{} steps", steps.len()), format!("{} targets", targets.len())));
    }
    let n = m.n_agents;
    let count = (steps.len() * n) as f64;
    let t = steps.len() as f64;
    let mut grads = Tom2cGrads::zeros_for(m);
    let mut out = Tom2cLosses::default();
    for (s, tg) in steps.iter().zip(targets) {
        let (f, _) = forward(m, &s.obs, &s.hidden, Some(&s.graph), 0.0, Category::GradientUpdate, rec)?;
        let mut d_logits = Tensor2::zeros(n, m.n_actions);
        let mut d_values = vec![0.0; n];
        for i in 0..n {
            let logp = log_softmax(f.logits.row(i));
            let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
            let h: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
            let a = s.actions[i];
            let adv = tg.advantages[i];
            out.policy += -logp[a] * adv / count;
            out.entropy += h / count;
            for c in 0..m.n_actions {
                let ind = if c == a { 1.0 } else { 0.0 };
                let g = adv * (p[c] - ind) + entropy_coef * p[c] * (logp[c] + h);
                d_logits.set(i, c, g / count);
            }
            let err = f.values[i] - tg.returns[i];
            out.critic += err * err / count;
            d_values[i] = 2.0 * err / count;
        }
        let off_diag: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| f.scores.get(i, j)).sum();
        out.sparsity += sparsity_coef * off_diag / t;
        backward(m, &f, &s.graph, &d_logits, &d_values, sparsity_coef / t, &mut grads, rec)?;
    }
    out.total = out.policy - entropy_coef * out.entropy + out.critic + out.sparsity;
    Ok((out, grads))
}

/// Per-step returns bootstrapped from the fragment's final value, and
/// advantages against the values the actor recorded.
pub fn tom2c_targets(steps: &[TrainStep], bootstrap: &[f64], gamma: f64) -> Result<Vec<StepTarget>> {
    let mut out: Vec<StepTarget> = steps
        .iter()
        .map(|s| StepTarget {
            returns: vec![0.0; s.rewards.len()],
            advantages: vec![0.0; s.rewards.len()],
        })
        .collect();
    let dones: Vec<bool> = steps.iter().map(|s| s.done).collect();
    for (i, &b) in bootstrap.iter().enumerate() {
        let r: Vec<f64> = steps.iter().map(|s| s.rewards[i]).collect();
        let g = discounted_returns_masked(&r, &dones, gamma, b)?;
        for ((t, s), gi) in out.iter_mut().zip(steps).zip(g) {
            t.returns[i] = gi;
            t.advantages[i] = gi - s.values[i];
        }
    }
    Ok(out)
}

/// Collects `horizon` steps. `hidden` carries the intention-net state across
/// calls and is zeroed whenever an episode restarts.
#[allow(clippy::too_many_arguments)]
pub fn tom2c_actor_step<E: MarkovGame, R: Rng>(
    m: &Tom2cModels,
    env: &mut E,
    hidden: &mut Tensor2,
    horizon: usize,
    threshold: f64,
    rng: &mut R,
    rec: &mut Recorder,
    episodes: &mut EpisodeTracker,
) -> Result<(Vec<TrainStep>, Vec<f64>)> {
    let n = env.n_agents();
    if n != m.n_agents || hidden.shape() != (tom_hidden_rows(n), m.tom_hidden) {
        return Err(Error::dim("tom2c_actor_step", hidden.shape_str(), format!("{} pairs × {} hidden", tom_hidden_rows(n), m.tom_hidden)));
    }
    let observe = |env: &E| Tensor2::from_rows(&env.observe_all().into_iter().map(|o| o.vector).collect::<Vec<_>>());
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        if env.is_done() {
            rec.span(Category::EnvStep, || env.reset_episode());
            *hidden = zero_hidden(m);
        }
        let obs = rec.span(Category::EnvStep, || observe(env))?;
        let (f, graph) = forward(m, &obs, hidden, None, threshold, Category::PolicyInference, rec)?;
        let actions: Vec<usize> = rec.span(Category::PolicyInference, || {
            f.logits.iter_rows().map(|l| sample_categorical(&softmax_row(l), rng)).collect()
        });
        let joint = JointAction::uniform_space(actions.clone(), m.n_actions)?;
        let result = rec.span(Category::EnvStep, || env.step(&joint))?;
        episodes.record(&result.rewards, result.done);
        steps.push(TrainStep {
            obs,
            hidden: std::mem::replace(hidden, f.h_next),
            graph,
            actions,
            rewards: result.rewards,
            done: result.done,
            values: f.values,
        });
    }
    let bootstrap = if steps.last().is_none_or(|s| s.done) {
        vec![0.0; n]
    } else {
        let obs = rec.span(Category::EnvStep, || observe(env))?;
        rec.span(Category::PolicyInference, || -> Result<Vec<f64>> {
            let (enc, _, _) = encode(m, &obs)?;
            Ok(m.critic.infer(&rotated(&enc))?.into_vec())
        })?
    };
    Ok((steps, bootstrap))
}

/// Consumes the batch and applies one Adam step to every network.
pub fn tom2c_learner_update(
    m: &mut Tom2cModels,
    opt: &mut Tom2cOptim,
    batch: &mut OnPolicyBatch<Fragment>,
    hyper: &Hyperparams,
    rec: &mut Recorder,
) -> Result<Tom2cLosses> {
    let fragments = batch.consume()?;
    let (steps, targets) = rec.span(Category::BufferOps, || -> Result<_> {
        let mut steps = Vec::new();
        let mut targets = Vec::new();
        for f in fragments {
            targets.extend(tom2c_targets(&f.steps, &f.bootstrap, hyper.gamma)?);
            steps.extend(f.steps);
        }
        Ok((steps, targets))
    })?;
    let (losses, grads) = tom2c_loss(m, &steps, &targets, hyper.entropy_coef, hyper.sparsity_coef, rec)?;
    rec.span(Category::GradientUpdate, || -> Result<()> {
        for ((p, g), s) in m.stores_mut().into_iter().zip(grads.all()).zip(&mut opt.states) {
            adam_step(p, g, s)?;
        }
        Ok(())
    })?;
    Ok(losses)
}

/// Published parameter versions; readers block until their version appears.
struct ParamBoard {
    state: Mutex<(BTreeMap<usize, Arc<Tom2cModels>>, bool)>,
    ready: Condvar,
}

impl ParamBoard {
    fn publish(&self, version: usize, m: Arc<Tom2cModels>) {
        let mut g = self.state.lock().expect("board lock");
        g.0.insert(version, m);
        g.0.retain(|&v, _| v + 2 >= version);
        self.ready.notify_all();
    }

    fn wait(&self, version: usize) -> Option<Arc<Tom2cModels>> {
        let mut g = self.state.lock().expect("board lock");
        loop {
            if g.1 {
                return None;
            }
            if let Some(m) = g.0.get(&version) {
                return Some(Arc::clone(m));
            }
            g = self.ready.wait(g).expect("board lock");
        }
    }

    fn close(&self) {
        self.state.lock().expect("board lock").1 = true;
        self.ready.notify_all();
    }
}

fn fingerprint_step(fp: &mut Fingerprint, s: &TrainStep) {
    fp.reals(s.obs.data());
    for &a in &s.actions {
        fp.word(a as u64);
    }
    fp.reals(&s.rewards);
    fp.word(u64::from(s.done));
    fp.word(s.graph.edge_count() as u64);
}

/// Overlapped ToM2C training on free-running rollout workers.
pub struct Tom2cRun {
    pub models: Tom2cModels,
    opt: Tom2cOptim,
    hyper: Hyperparams,
    board: Arc<ParamBoard>,
    rx: Option<Receiver<Result<Fragment>>>,
    pool: WorkerPool,
    workers: usize,
    early: Vec<Fragment>,
    learner_delay: Duration,
    profile: bool,
    episodes: Vec<f64>,
    experiences: Fingerprint,
    env_steps: u64,
    pub last_losses: Option<Tom2cLosses>,
}

impl Tom2cRun {
    pub fn new<E: MarkovGame + 'static>(
        make_env: impl Fn(u64) -> Result<E>,
        rollout_threads: usize,
        hyper: Hyperparams,
        seed: u64,
        profile: bool,
    ) -> Result<Self> {
        hyper.validate()?;
        if hyper.horizon == 0 {
            return Err(Error::Config("hyperparameters.horizon must be at least 1".into()));
        }
        let mut envs: Vec<Option<E>> = (0..rollout_threads).map(|w| make_env(seed.wrapping_add(w as u64)).map(Some)).collect::<Result<_>>()?;
        let probe = envs.first().and_then(Option::as_ref).ok_or_else(|| Error::Config("rollout_threads must be at least 1".into()))?;
        let (n, width, actions) = (probe.n_agents(), probe.obs_width(), probe.n_actions());
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0x1ea7_0000);
        let models = Tom2cModels::new(n, width, actions, hyper.hidden, &mut init)?;
        let opt = Tom2cOptim::new(&models, hyper.lr);
        let board = Arc::new(ParamBoard {
            state: Mutex::new((BTreeMap::new(), false)),
            ready: Condvar::new(),
        });
        board.publish(0, Arc::new(models.clone()));
        let (tx, rx) = sync_channel(2 * rollout_threads);
        let (horizon, threshold) = (hyper.horizon, hyper.comm_threshold);
        let start_hidden = zero_hidden(&models);
        let pool = spawn_rollout_workers(
            rollout_threads,
            seed,
            |w, s| {
                let mut env = envs[w].take().expect("one environment per worker");
                let board = Arc::clone(&board);
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5eed_0001);
                let mut hidden = start_hidden.clone();
                let mut tracker = EpisodeTracker::default();
                let mut round = 0usize;
                move |_: &AtomicBool| {
                    let params = board.wait(round.saturating_sub(1))?;
                    let start = Instant::now();
                    let mut rec = Recorder::with_enabled(Phase::SampleGeneration, profile);
                    let out = tom2c_actor_step(&params, &mut env, &mut hidden, horizon, threshold, &mut rng, &mut rec, &mut tracker).map(|(steps, bootstrap)| Fragment {
                        worker: w,
                        round,
                        steps,
                        bootstrap,
                        episodes: std::mem::take(&mut tracker.completed),
                        gen_secs: start.elapsed().as_secs_f64(),
                        rec,
                    });
                    round += 1;
                    Some(out)
                }
            },
            tx,
        )?;
        Ok(Self {
            models,
            opt,
            hyper,
            board,
            rx: Some(rx),
            pool,
            workers: rollout_threads,
            early: Vec::new(),
            learner_delay: Duration::ZERO,
            profile,
            episodes: Vec::new(),
            experiences: Fingerprint::default(),
            env_steps: 0,
            last_losses: None,
        })
    }

    /// Extra time the learner sleeps inside every update.
    pub fn set_learner_delay(&mut self, d: Duration) {
        self.learner_delay = d;
    }

    fn collect_round(&mut self, round: usize) -> Result<Vec<Fragment>> {
        let mut got: Vec<Fragment> = Vec::with_capacity(self.workers);
        let mut keep = Vec::new();
        for f in self.early.drain(..) {
            if f.round == round {
                got.push(f);
            } else {
                keep.push(f);
            }
        }
        self.early = keep;
        let rx = self.rx.as_ref().ok_or_else(|| Error::Runtime("run already shut down".into()))?;
        while got.len() < self.workers {
            let f = rx.recv().map_err(|_| Error::Runtime("rollout workers stopped".into()))??;
            if f.round == round {
                got.push(f);
            } else {
                self.early.push(f);
            }
        }
        got.sort_by_key(|f| f.worker);
        Ok(got)
    }

    pub fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
        let start = Instant::now();
        let fragments = self.collect_round(iteration)?;
        let mut b = TimingBreakdown::new(iteration);
        let mut samples = 0;
        for f in &fragments {
            b.absorb(&f.rec);
            b.t_sg = b.t_sg.max(f.gen_secs);
            samples += f.steps.len();
            self.episodes.extend_from_slice(&f.episodes);
            for s in &f.steps {
                fingerprint_step(&mut self.experiences, s);
            }
        }
        let mu_start = Instant::now();
        let mut rec = Recorder::with_enabled(Phase::ModelUpdate, self.profile);
        let mut batch = OnPolicyBatch::new(fragments);
        self.last_losses = Some(tom2c_learner_update(&mut self.models, &mut self.opt, &mut batch, &self.hyper, &mut rec)?);
        if !self.learner_delay.is_zero() {
            rec.span(Category::GradientUpdate, || std::thread::sleep(self.learner_delay));
        }
        b.absorb(&rec);
        b.t_mu = mu_start.elapsed().as_secs_f64();
        self.board.publish(iteration + 1, Arc::new(self.models.clone()));
        b.wallclock = start.elapsed().as_secs_f64();
        b.samples = samples as u64;
        self.env_steps += samples as u64;
        Ok(b)
    }

    pub fn episode_rewards(&self) -> Vec<f64> {
        self.episodes.clone()
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

    pub fn shutdown(&mut self) -> Result<()> {
        self.board.close();
        self.pool.stop();
        self.rx = None;
        self.pool.shutdown()
    }
}

impl Drop for Tom2cRun {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Fresh all-zero pair state.
pub fn zero_hidden(m: &Tom2cModels) -> Tensor2 {
    Tensor2::zeros(tom_hidden_rows(m.n_agents), m.tom_hidden)
}
