//! Networked queue-control stand-in for traffic-signal style benchmarks.
//!
//! Each node holds a queue level in `[0, 1]`. Per step and node, with `N(i)` the
//! topology neighbors and `in_i` a seeded inflow draw:
//!
//! ```text
//! q_i ← clamp(q_i + in_i − service(a_i) + spill·mean_{j∈N(i)} q_j
//!             − pull·|{j ∈ N(i) : a_j = serve-neighbor}|, 0, 1)
//! ```
//!
//! `a_i = 0` serves the node's own queue, `a_i = 1` serves the flow arriving
//! from neighbors (draining their queues). Reward is `−q_i` after the update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{JointAction, MarkovGame, Observation, StepResult};
use crate::error::{Error, Result};
use crate::graph::{CommGraph, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Chain,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueDynamics {
    pub inflow_max: f64,
    pub serve_self: f64,
    pub serve_neighbor_own: f64,
    pub pull: f64,
    pub spill: f64,
}

impl Default for QueueDynamics {
    fn default() -> Self {
        Self {
            inflow_max: 0.4,
            serve_self: 0.3,
            serve_neighbor_own: 0.0,
            pull: 0.05,
            spill: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkedConfig {
    pub n_agents: usize,
    pub topology: Topology,
    pub max_steps: usize,
    pub dynamics: QueueDynamics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Networked {
    cfg: NetworkedConfig,
    neighbors: Vec<Vec<usize>>,
    max_degree: usize,
    queues: Vec<f64>,
    last_inflow: Vec<f64>,
    t: usize,
    rng: ChaCha8Rng,
}

pub fn networked_reset(n_agents: usize, topology: Topology, seed: u64) -> Result<Networked> {
    Networked::new(
        NetworkedConfig {
            n_agents,
            topology,
            max_steps: 50,
            dynamics: QueueDynamics::default(),
        },
        seed,
    )
}

fn topology_pairs(n: usize, topology: Topology) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    if topology == Topology::Ring && n > 2 {
        pairs.push((n - 1, 0));
    }
    pairs
}

impl Networked {
    pub fn new(cfg: NetworkedConfig, seed: u64) -> Result<Self> {
        let n = cfg.n_agents;
        match cfg.topology {
            Topology::Chain if n < 1 => return Err(Error::Config("chain needs at least 1 node".into())),
            Topology::Ring if n < 2 => return Err(Error::Config(format!("ring needs at least 2 nodes, got {n}"))),
            _ => {}
        }
        if cfg.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        let graph = CommGraph::undirected(n, &topology_pairs(n, cfg.topology), Provenance::Predefined)?;
        let neighbors: Vec<Vec<usize>> = (0..n).map(|i| graph.in_neighbors(i)).collect();
        let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let mut env = Self {
            neighbors,
            max_degree,
            queues: vec![0.0; n],
            last_inflow: vec![0.0; n],
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        };
        env.reset_episode();
        Ok(env)
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn set_queues(&mut self, q: &[f64]) -> Result<()> {
        if q.len() != self.queues.len() || q.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("queue levels must be n values in [0, 1]".into()));
        }
        self.queues.copy_from_slice(q);
        Ok(())
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn last_inflow(&self) -> &[f64] {
        &self.last_inflow
    }

    pub fn config(&self) -> &NetworkedConfig {
        &self.cfg
    }

    /// Applies one update with explicit inflows.
    pub fn step_with_inflow(&mut self, actions: &JointAction, inflow: &[f64]) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        let n = self.cfg.n_agents;
        actions.validate(n)?;
        if inflow.len() != n {
            return Err(Error::dim("networked_step inflow", format!("{n} nodes"), format!("{} values", inflow.len())));
        }
        let d = self.cfg.dynamics;
        let old = self.queues.clone();
        for i in 0..n {
            let nbrs = &self.neighbors[i];
            let service = if actions.actions[i] == 0 { d.serve_self } else { d.serve_neighbor_own };
            let spill = if nbrs.is_empty() {
                0.0
            } else {
                d.spill * nbrs.iter().map(|&j| old[j]).sum::<f64>() / nbrs.len() as f64
            };
            let pulled = d.pull * nbrs.iter().filter(|&&j| actions.actions[j] == 1).count() as f64;
            self.queues[i] = (old[i] + inflow[i] - service + spill - pulled).clamp(0.0, 1.0);
        }
        self.last_inflow.copy_from_slice(inflow);
        self.t += 1;
        Ok(StepResult {
            rewards: self.queues.iter().map(|q| -q).collect(),
            done: self.is_done(),
        })
    }
}

impl MarkovGame for Networked {
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn obs_width(&self) -> usize {
        1 + self.max_degree
    }

    fn observe(&self, agent: usize) -> Result<Observation> {
        let n = self.cfg.n_agents;
        if agent >= n {
            return Err(Error::AgentIndex { agent, n });
        }
        let mut v = Vec::with_capacity(self.obs_width());
        v.push(self.queues[agent]);
        v.extend(self.neighbors[agent].iter().map(|&j| self.queues[j]));
        v.resize(self.obs_width(), 0.0);
        Ok(Observation { agent, vector: v })
    }

    fn step(&mut self, actions: &JointAction) -> Result<StepResult> {
        let max = self.cfg.dynamics.inflow_max;
        let inflow: Vec<f64> = (0..self.cfg.n_agents).map(|_| max * self.rng.gen::<f64>()).collect();
        self.step_with_inflow(actions, &inflow)
    }

    fn reset_episode(&mut self) {
        for q in &mut self.queues {
            *q = self.rng.gen::<f64>();
        }
        self.last_inflow.iter_mut().for_each(|v| *v = 0.0);
        self.t = 0;
    }

    fn time_step(&self) -> usize {
        self.t
    }

    fn is_done(&self) -> bool {
        self.t >= self.cfg.max_steps
    }

    fn comm_graph(&self) -> Option<CommGraph> {
        CommGraph::undirected(self.cfg.n_agents, &topology_pairs(self.cfg.n_agents, self.cfg.topology), Provenance::Predefined).ok()
    }
}
