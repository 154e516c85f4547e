//! Seeded stand-in environments with per-agent partial observability.

mod coopnav;
mod networked;

pub use coopnav::{coopnav_reset, CoopNav, CoopNavConfig, MOVE_STEP};
pub use networked::{networked_reset, Networked, NetworkedConfig, QueueDynamics, Topology};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CommGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: usize,
    pub vector: Vec<f64>,
}

/// One discrete action per agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction {
    pub actions: Vec<usize>,
    pub space: Vec<usize>,
}

impl JointAction {
    pub fn new(actions: Vec<usize>, space: Vec<usize>) -> Result<Self> {
        if actions.len() != space.len() {
            return Err(Error::dim("JointAction", format!("{} actions", actions.len()), format!("{} spaces", space.len())));
        }
        let ja = Self { actions, space };
        ja.validate(ja.actions.len())?;
        Ok(ja)
    }

    pub fn uniform_space(actions: Vec<usize>, space: usize) -> Result<Self> {
        let n = actions.len();
        Self::new(actions, vec![space; n])
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if self.actions.len() != n_agents || self.space.len() != n_agents {
            return Err(Error::dim("JointAction", format!("{n_agents} agents"), format!("{} actions", self.actions.len())));
        }
        for (agent, (&a, &s)) in self.actions.iter().zip(&self.space).enumerate() {
            if a >= s {
                return Err(Error::Action {
                    agent,
                    action: a,
                    space: s,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// An n-agent Markov game stepped in place. The environment itself is the state.
pub trait MarkovGame: Send {
    fn n_agents(&self) -> usize;

    fn n_actions(&self) -> usize;

    /// Observation width, constant for a configuration.
    fn obs_width(&self) -> usize;

    fn observe(&self, agent: usize) -> Result<Observation>;

    fn observe_all(&self) -> Vec<Observation> {
        (0..self.n_agents())
            .map(|i| self.observe(i).expect("agent index in range"))
            .collect()
    }

    fn step(&mut self, actions: &JointAction) -> Result<StepResult>;

    /// Starts a new episode, drawing the initial state from the environment's generator.
    fn reset_episode(&mut self);

    fn time_step(&self) -> usize;

    fn is_done(&self) -> bool;

    /// Pre-defined communication graph associated with the environment, if any.
    fn comm_graph(&self) -> Option<CommGraph> {
        None
    }

    fn action_spaces(&self) -> Vec<usize> {
        vec![self.n_actions(); self.n_agents()]
    }
}
