//! Decentralized advantage actor-critic with belief propagation over the
//! environment's fixed graph. Single-threaded: every iteration runs a full
//! rollout and then one update per agent.
//!
//! Per step each agent's belief is refreshed by one belief round over the
//! current states and the previous step's action probabilities; the actor and
//! critic read `[obs ‖ belief]`. The learner recomputes each step's belief from
//! the recorded comm-net input and prior belief, so gradient reaches the
//! comm-net through the last round only.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{discounted_returns_masked, sample_categorical, EpisodeTracker, Fingerprint, Hyperparams};
use crate::comm::{belief_inputs, belief_round, comm_net_backward, comm_net_forward, comm_net_params, Belief};
use crate::envs::{JointAction, MarkovGame};
use crate::error::{Error, Result};
use crate::graph::{CommGraph, Provenance};
use crate::numerics::{adam_step, softmax_row, Activation, GradStore, Mlp, OptimizerState, ParamStore, Tensor2};
use crate::profiler::{Category, Phase, Recorder, TimingBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeurcommAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub comm_net: ParamStore,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub comm_opt: OptimizerState,
}

impl NeurcommAgent {
    pub fn new<R: Rng + ?Sized>(obs_width: usize, n_actions: usize, belief_dim: usize, hidden: usize, lr: f64, rng: &mut R) -> Self {
        let actor = Mlp::new(&[obs_width + belief_dim, hidden, hidden, n_actions], Activation::Tanh, Activation::Identity, rng);
        let critic = Mlp::new(&[obs_width + belief_dim, hidden, hidden, 1], Activation::Tanh, Activation::Identity, rng);
        let comm_net = comm_net_params(belief_dim, obs_width, n_actions, rng);
        Self {
            actor_opt: OptimizerState::new(&actor.params, lr),
            critic_opt: OptimizerState::new(&critic.params, lr),
            comm_opt: OptimizerState::new(&comm_net, lr),
            actor,
            critic,
            comm_net,
        }
    }

    /// Actor, critic and comm-net layers as one store.
    pub fn packed(&self) -> ParamStore {
        let mut layers = self.actor.params.layers.clone();
        let mut kinds = self.actor.params.kinds.clone();
        for p in [&self.critic.params, &self.comm_net] {
            layers.extend(p.layers.iter().cloned());
            kinds.extend(p.kinds.iter().cloned());
        }
        ParamStore::new(layers, kinds)
    }

    /// Inverse of [`NeurcommAgent::packed`].
    pub fn with_packed(&self, packed: &ParamStore) -> Self {
        let mut out = self.clone();
        let mut at = 0;
        for p in [&mut out.actor.params, &mut out.critic.params, &mut out.comm_net] {
            let k = p.layers.len();
            p.layers.clone_from_slice(&packed.layers[at..at + k]);
            at += k;
        }
        out
    }

    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        for p in [&self.actor.params, &self.critic.params, &self.comm_net] {
            fp.params(p);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeurcommGrads {
    pub actor: GradStore,
    pub critic: GradStore,
    pub comm_net: GradStore,
}

impl NeurcommGrads {
    /// Same layout as [`NeurcommAgent::packed`].
    pub fn packed(&self) -> GradStore {
        let mut layers = self.actor.grads.layers.clone();
        let mut kinds = self.actor.grads.kinds.clone();
        for g in [&self.critic, &self.comm_net] {
            layers.extend(g.grads.layers.iter().cloned());
            kinds.extend(g.grads.kinds.iter().cloned());
        }
        GradStore {
            grads: ParamStore::new(layers, kinds),
            accumulated: true,
        }
    }
}

/// One agent's view of one recorded step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentStep {
    pub obs: Vec<f64>,
    /// Belief entering the round.
    pub prior_belief: Vec<f64>,
    /// Pooled neighbor input of the round.
    pub comm_input: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeurcommLosses {
    pub policy: f64,
    pub entropy: f64,
    pub critic: f64,
    pub total: f64,
}

/// Beliefs and last action probabilities carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    pub beliefs: Vec<Belief>,
    pub probs: Vec<Vec<f64>>,
}

impl BeliefState {
    pub fn zero(n: usize, belief_dim: usize, n_actions: usize) -> Self {
        Self {
            beliefs: (0..n).map(|i| Belief::zero(i, belief_dim)).collect(),
            probs: vec![vec![0.0; n_actions]; n],
        }
    }

    fn reset(&mut self) {
        for b in &mut self.beliefs {
            b.vector.iter_mut().for_each(|v| *v = 0.0);
        }
        for p in &mut self.probs {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn rows(parts: impl Iterator<Item = Vec<f64>>) -> Result<Tensor2> {
    Tensor2::from_rows(&parts.collect::<Vec<_>>())
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// One agent's A2C loss over its recorded steps with frozen returns and
/// advantages: `mean(−logπ(a)·A) − β·mean(H) + mean((G − V)²)`.
pub fn neurcomm_agent_loss(
    agent: &NeurcommAgent,
    steps: &[AgentStep],
    returns: &[f64],
    advantages: &[f64],
    entropy_coef: f64,
    rec: &mut Recorder,
) -> Result<(NeurcommLosses, NeurcommGrads)> {
    let t = steps.len();
    if t == 0 || returns.len() != t || advantages.len() != t {
        return Err(Error::dim("neurcomm_agent_loss", format!("{t} steps"), format!("{} returns, {} advantages", returns.len(), advantages.len())));
    }
    let (belief, cc) = rec.span(Category::Communication, || -> Result<_> {
        let x = rows(steps.iter().map(|s| s.comm_input.clone()))?;
        let h = rows(steps.iter().map(|s| s.prior_belief.clone()))?;
        comm_net_forward(&agent.comm_net, &x, &h)
    })?;
    let (losses, d_belief, actor_g, critic_g) = rec.span(Category::GradientUpdate, || -> Result<_> {
        let obs = rows(steps.iter().map(|s| s.obs.clone()))?;
        let input = Tensor2::hcat(&[&obs, &belief])?;
        let (logits, ac) = agent.actor.forward(&input)?;
        let (v, vc) = agent.critic.forward(&input)?;
        let tf = t as f64;
        let a_n = logits.cols();
        let mut out = NeurcommLosses::default();
        let mut d_logits = Tensor2::zeros(t, a_n);
        let mut d_v = Tensor2::zeros(t, 1);
        for (r, s) in steps.iter().enumerate() {
            let logp = log_softmax(logits.row(r));
            let p: Vec<f64> = logp.iter().map(|x| x.exp()).collect();
            let h: f64 = -p.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
            let adv = advantages[r];
            out.policy += -logp[s.action] * adv / tf;
            out.entropy += h / tf;
            for c in 0..a_n {
                let ind = if c == s.action { 1.0 } else { 0.0 };
                d_logits.set(r, c, (adv * (p[c] - ind) + entropy_coef * p[c] * (logp[c] + h)) / tf);
            }
            let err = v.get(r, 0) - returns[r];
            out.critic += err * err / tf;
            d_v.set(r, 0, 2.0 * err / tf);
        }
        out.total = out.policy - entropy_coef * out.entropy + out.critic;
        let (d_in_a, ga) = agent.actor.backward(&d_logits, &ac)?;
        let (d_in_c, gc) = agent.critic.backward(&d_v, &vc)?;
        let w = obs.cols();
        let mut d_belief = d_in_a.hsplit(&[w, belief.cols()])?.pop().expect("two parts");
        d_belief.add_assign(&d_in_c.hsplit(&[w, belief.cols()])?.pop().expect("two parts"))?;
        Ok((out, d_belief, ga, gc))
    })?;
    let comm_g = rec.span(Category::Communication, || comm_net_backward(&agent.comm_net, &d_belief, &cc))?;
    Ok((
        losses,
        NeurcommGrads {
            actor: actor_g,
            critic: critic_g,
            comm_net: comm_g,
        },
    ))
}

/// Per-step records of a rollout, indexed `[agent][step]`, plus bootstraps.
#[derive(Clone, Debug, Default)]
pub struct Rollout {
    pub steps: Vec<Vec<AgentStep>>,
    pub bootstrap: Vec<f64>,
}

fn critic_value(agent: &NeurcommAgent, obs: &[f64], belief: &[f64]) -> Result<f64> {
    let mut x = obs.to_vec();
    x.extend_from_slice(belief);
    Ok(agent.critic.infer(&Tensor2::row_vector(&x))?.get(0, 0))
}

/// Sample generation: `horizon` steps of belief round, then per-agent action.
#[allow(clippy::too_many_arguments)]
pub fn neurcomm_rollout<E: MarkovGame, R: Rng>(
    agents: &[NeurcommAgent],
    env: &mut E,
    graph: &CommGraph,
    state: &mut BeliefState,
    horizon: usize,
    rng: &mut R,
    rec: &mut Recorder,
    episodes: &mut EpisodeTracker,
) -> Result<Rollout> {
    let n = env.n_agents();
    if graph.provenance() != Provenance::Predefined || graph.n() != n || agents.len() != n {
        return Err(Error::Protocol(format!("neurcomm needs a pre-defined {n}-node graph and {n} agents")));
    }
    let mut out = Rollout {
        steps: vec![Vec::with_capacity(horizon); n],
        bootstrap: vec![0.0; n],
    };
    let comm_nets: Vec<ParamStore> = agents.iter().map(|a| a.comm_net.clone()).collect();
    for _ in 0..horizon {
        if env.is_done() {
            rec.span(Category::EnvStep, || env.reset_episode());
            state.reset();
        }
        let obs: Vec<Vec<f64>> = rec.span(Category::EnvStep, || env.observe_all().into_iter().map(|o| o.vector).collect());
        let inputs = rec.span(Category::Communication, || belief_inputs(graph, &state.beliefs, &obs, &state.probs))?;
        let next = belief_round(graph, &state.beliefs, &obs, &state.probs, &comm_nets, rec)?;
        let (actions, probs, values) = rec.span(Category::PolicyInference, || -> Result<_> {
            let mut actions = Vec::with_capacity(n);
            let mut probs = Vec::with_capacity(n);
            let mut values = Vec::with_capacity(n);
            for (i, a) in agents.iter().enumerate() {
                let mut x = obs[i].clone();
                x.extend_from_slice(&next[i].vector);
                let x = Tensor2::row_vector(&x);
                let p = softmax_row(a.actor.infer(&x)?.row(0));
                actions.push(sample_categorical(&p, rng));
                probs.push(p);
                values.push(a.critic.infer(&x)?.get(0, 0));
            }
            Ok((actions, probs, values))
        })?;
        let joint = JointAction::uniform_space(actions.clone(), env.n_actions())?;
        let result = rec.span(Category::EnvStep, || env.step(&joint))?;
        episodes.record(&result.rewards, result.done);
        for i in 0..n {
            out.steps[i].push(AgentStep {
                obs: obs[i].clone(),
                prior_belief: std::mem::take(&mut state.beliefs[i].vector),
                comm_input: inputs[i].clone(),
                action: actions[i],
                reward: result.rewards[i],
                done: result.done,
                value: values[i],
            });
        }
        state.beliefs = next;
        state.probs = probs;
    }
    let last_done = out.steps.first().and_then(|s| s.last()).is_none_or(|s| s.done);
    if !last_done {
        let obs: Vec<Vec<f64>> = rec.span(Category::EnvStep, || env.observe_all().into_iter().map(|o| o.vector).collect());
        out.bootstrap = rec.span(Category::PolicyInference, || -> Result<Vec<f64>> {
            agents.iter().enumerate().map(|(i, a)| critic_value(a, &obs[i], &state.beliefs[i].vector)).collect()
        })?;
    }
    Ok(out)
}

/// Model update: one loss and one Adam step per network of every agent.
pub fn neurcomm_update(agents: &mut [NeurcommAgent], rollout: &Rollout, hyper: &Hyperparams, rec: &mut Recorder) -> Result<Vec<NeurcommLosses>> {
    let mut out = Vec::with_capacity(agents.len());
    for (i, agent) in agents.iter_mut().enumerate() {
        let steps = &rollout.steps[i];
        let (returns, advantages) = rec.span(Category::BufferOps, || -> Result<_> {
            let r: Vec<f64> = steps.iter().map(|s| s.reward).collect();
            let d: Vec<bool> = steps.iter().map(|s| s.done).collect();
            let g = discounted_returns_masked(&r, &d, hyper.gamma, rollout.bootstrap[i])?;
            let a = g.iter().zip(steps).map(|(g, s)| g - s.value).collect::<Vec<_>>();
            Ok((g, a))
        })?;
        let (l, g) = neurcomm_agent_loss(agent, steps, &returns, &advantages, hyper.entropy_coef, rec)?;
        rec.span(Category::GradientUpdate, || -> Result<()> {
            adam_step(&mut agent.actor.params, &g.actor, &mut agent.actor_opt)?;
            adam_step(&mut agent.critic.params, &g.critic, &mut agent.critic_opt)
        })?;
        rec.span(Category::Communication, || adam_step(&mut agent.comm_net, &g.comm_net, &mut agent.comm_opt))?;
        out.push(l);
    }
    Ok(out)
}

/// Output of one [`neurcomm_iteration`].
#[derive(Clone, Debug)]
pub struct IterationOutput {
    pub losses: Vec<NeurcommLosses>,
    pub rollout: Rollout,
    pub t_sg: f64,
    pub t_mu: f64,
}

/// Rollout followed by update; with `horizon = 0` nothing changes.
#[allow(clippy::too_many_arguments)]
pub fn neurcomm_iteration<E: MarkovGame, R: Rng>(
    agents: &mut [NeurcommAgent],
    env: &mut E,
    graph: &CommGraph,
    state: &mut BeliefState,
    hyper: &Hyperparams,
    rng: &mut R,
    sg: &mut Recorder,
    mu: &mut Recorder,
    episodes: &mut EpisodeTracker,
) -> Result<IterationOutput> {
    let start = Instant::now();
    let rollout = neurcomm_rollout(agents, env, graph, state, hyper.horizon, rng, sg, episodes)?;
    let t_sg = start.elapsed().as_secs_f64();
    let mid = Instant::now();
    let losses = if hyper.horizon == 0 {
        Vec::new()
    } else {
        neurcomm_update(agents, &rollout, hyper, mu)?
    };
    Ok(IterationOutput {
        losses,
        rollout,
        t_sg,
        t_mu: mid.elapsed().as_secs_f64(),
    })
}

/// Sequential NeurComm training on one thread.
pub struct NeurcommRun<E> {
    pub agents: Vec<NeurcommAgent>,
    env: E,
    graph: CommGraph,
    pub state: BeliefState,
    rng: ChaCha8Rng,
    hyper: Hyperparams,
    profile: bool,
    episodes: EpisodeTracker,
    experiences: Fingerprint,
    env_steps: u64,
    pub last_losses: Vec<NeurcommLosses>,
}

impl<E: MarkovGame> NeurcommRun<E> {
    pub fn new(env: E, hyper: Hyperparams, seed: u64, profile: bool) -> Result<Self> {
        hyper.validate()?;
        let graph = env
            .comm_graph()
            .filter(|g| g.provenance() == Provenance::Predefined)
            .ok_or_else(|| Error::Config("neurcomm needs an environment with a pre-defined communication graph".into()))?;
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0x1ea7_0000);
        let (n, w, a) = (env.n_agents(), env.obs_width(), env.n_actions());
        let agents = (0..n)
            .map(|_| NeurcommAgent::new(w, a, hyper.belief_dim, hyper.hidden, hyper.lr, &mut init))
            .collect();
        Ok(Self {
            agents,
            graph,
            state: BeliefState::zero(n, hyper.belief_dim, a),
            env,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001),
            hyper,
            profile,
            episodes: EpisodeTracker::default(),
            experiences: Fingerprint::default(),
            env_steps: 0,
            last_losses: Vec::new(),
        })
    }

    pub fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
        let start = Instant::now();
        let mut sg = Recorder::with_enabled(Phase::SampleGeneration, self.profile);
        let mut mu = Recorder::with_enabled(Phase::ModelUpdate, self.profile);
        let out = neurcomm_iteration(
            &mut self.agents,
            &mut self.env,
            &self.graph,
            &mut self.state,
            &self.hyper,
            &mut self.rng,
            &mut sg,
            &mut mu,
            &mut self.episodes,
        )?;
        let mut b = TimingBreakdown::new(iteration);
        b.absorb(&sg);
        b.absorb(&mu);
        b.t_sg = out.t_sg;
        b.t_mu = out.t_mu;
        b.wallclock = start.elapsed().as_secs_f64();
        let samples = out.rollout.steps.first().map_or(0, Vec::len);
        b.samples = samples as u64;
        b.learner_steps = if samples == 0 { 0.0 } else { 1.0 };
        for t in 0..samples {
            for s in out.rollout.steps.iter().map(|a| &a[t]) {
                self.experiences.reals(&s.obs);
                self.experiences.word(s.action as u64);
                self.experiences.word(s.reward.to_bits());
            }
        }
        self.env_steps += samples as u64;
        self.last_losses = out.losses;
        Ok(b)
    }

    pub fn episode_rewards(&self) -> Vec<f64> {
        self.episodes.completed.clone()
    }

    pub fn experience_fingerprint(&self) -> u64 {
        self.experiences.0
    }

    pub fn param_fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::default();
        for a in &self.agents {
            a.fingerprint(&mut fp);
        }
        fp.0
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::comm_net_zero_params;
    use crate::envs::{networked_reset, Topology};
    use crate::numerics::gradcheck;

    fn quiet(p: Phase) -> Recorder {
        Recorder::disabled(p)
    }

    #[test]
    fn agent_loss_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = NeurcommAgent::new(3, 3, 4, 5, 1e-3, &mut rng);
        let steps: Vec<AgentStep> = (0..3)
            .map(|_| AgentStep {
                obs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                prior_belief: (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                comm_input: (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: rng.gen_range(0..3),
                reward: 0.0,
                done: false,
                value: 0.0,
            })
            .collect();
        let g = [0.3, -0.7, 1.1];
        let a = [0.5, -0.2, 0.9];
        let err = gradcheck(
            |p| {
                let (l, gr) = neurcomm_agent_loss(&agent.with_packed(p), &steps, &g, &a, 0.05, &mut quiet(Phase::ModelUpdate)).unwrap();
                (l.total, gr.packed())
            },
            &agent.packed(),
            1e-3,
        );
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn zero_horizon_changes_nothing() {
        let env = networked_reset(3, Topology::Chain, 2).unwrap();
        let hyper = Hyperparams {
            horizon: 0,
            hidden: 8,
            belief_dim: 4,
            ..Hyperparams::default()
        };
        let mut run = NeurcommRun::new(env, hyper, 2, true).unwrap();
        let before = (run.agents.clone(), run.state.clone());
        let b = run.iterate(0).unwrap();
        assert_eq!((run.agents.clone(), run.state.clone()), before);
        assert_eq!(b.samples, 0);
        assert!(run.last_losses.is_empty());
    }

    #[test]
    fn zero_comm_net_keeps_beliefs_at_zero() {
        let mut env = networked_reset(2, Topology::Chain, 3).unwrap();
        let graph = env.comm_graph().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, a) = (env.obs_width(), env.n_actions());
        let mut agents: Vec<NeurcommAgent> = (0..2).map(|_| NeurcommAgent::new(w, a, 4, 8, 1e-3, &mut rng)).collect();
        for ag in &mut agents {
            ag.comm_net = comm_net_zero_params(4, w, a);
        }
        let mut state = BeliefState::zero(2, 4, a);
        let mut rec = quiet(Phase::SampleGeneration);
        let ro = neurcomm_rollout(&agents, &mut env, &graph, &mut state, 20, &mut rng, &mut rec, &mut EpisodeTracker::default()).unwrap();
        assert!(state.beliefs.iter().all(|b| b.vector.iter().all(|&v| v == 0.0)));
        for s in &ro.steps[0] {
            assert!(s.prior_belief.iter().all(|&v| v == 0.0));
            let mut x = s.obs.clone();
            x.extend([0.0; 4]);
            let v = agents[0].critic.infer(&Tensor2::row_vector(&x)).unwrap().get(0, 0);
            assert_eq!(v, s.value);
        }
    }

    #[test]
    fn rollout_charges_every_category() {
        let env = networked_reset(2, Topology::Chain, 4).unwrap();
        let hyper = Hyperparams {
            horizon: 4,
            hidden: 8,
            belief_dim: 4,
            ..Hyperparams::default()
        };
        let mut run = NeurcommRun::new(env, hyper, 4, true).unwrap();
        let b = run.iterate(0).unwrap();
        for c in [Category::PolicyInference, Category::Communication, Category::EnvStep, Category::GradientUpdate, Category::BufferOps] {
            assert!(b.category(c) > 0.0, "{c:?}");
        }
        assert!(b.comm_bytes > 0);
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let go = || {
            let env = networked_reset(4, Topology::Ring, 5).unwrap();
            let hyper = Hyperparams {
                horizon: 10,
                hidden: 8,
                belief_dim: 4,
                ..Hyperparams::default()
            };
            let mut run = NeurcommRun::new(env, hyper, 5, false).unwrap();
            for it in 0..6 {
                run.iterate(it).unwrap();
            }
            (run.episode_rewards(), run.experience_fingerprint(), run.param_fingerprint())
        };
        let a = go();
        assert_eq!(a.0.iter().map(|r| r.to_bits()).collect::<Vec<_>>(), go().0.iter().map(|r| r.to_bits()).collect::<Vec<_>>());
        assert_eq!(a, go());
    }

    #[test]
    fn learnt_graphs_are_refused() {
        let mut env = networked_reset(2, Topology::Chain, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, a) = (env.obs_width(), env.n_actions());
        let agents: Vec<NeurcommAgent> = (0..2).map(|_| NeurcommAgent::new(w, a, 4, 8, 1e-3, &mut rng)).collect();
        let g = CommGraph::complete(2, Provenance::Learnt);
        let mut state = BeliefState::zero(2, 4, a);
        let r = neurcomm_rollout(&agents, &mut env, &g, &mut state, 2, &mut rng, &mut quiet(Phase::SampleGeneration), &mut EpisodeTracker::default());
        assert!(matches!(r, Err(Error::Protocol(_))));
    }
}
