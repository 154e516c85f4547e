//! Discrete cooperative navigation: n agents cover n landmarks in `[-1, 1]²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{JointAction, MarkovGame, Observation, StepResult};
use crate::error::{Error, Result};

pub const MOVE_STEP: f64 = 0.1;
const COLLISION_RADIUS: f64 = 0.1;
const N_ACTIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopNavConfig {
    pub n_agents: usize,
    pub max_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoopNav {
    cfg: CoopNavConfig,
    agents: Vec<[f64; 2]>,
    landmarks: Vec<[f64; 2]>,
    t: usize,
    rng: ChaCha8Rng,
}

pub fn coopnav_reset(n_agents: usize, seed: u64) -> Result<CoopNav> {
    CoopNav::new(
        CoopNavConfig {
            n_agents,
            max_steps: 50,
        },
        seed,
    )
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl CoopNav {
    pub fn new(cfg: CoopNavConfig, seed: u64) -> Result<Self> {
        if cfg.n_agents == 0 {
            return Err(Error::Config("cooperative navigation needs at least one agent".into()));
        }
        if cfg.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        let mut env = Self {
            agents: Vec::new(),
            landmarks: Vec::new(),
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        };
        env.reset_episode();
        Ok(env)
    }

    /// Environment with explicit positions, for constructed scenarios.
    pub fn from_positions(agents: Vec<[f64; 2]>, landmarks: Vec<[f64; 2]>, max_steps: usize, seed: u64) -> Result<Self> {
        if agents.is_empty() || agents.len() != landmarks.len() {
            return Err(Error::Config(format!(
                "need equal, non-zero agent and landmark counts (got {} and {})",
                agents.len(),
                landmarks.len()
            )));
        }
        if agents.iter().chain(&landmarks).flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Config("positions must lie in [-1, 1]^2".into()));
        }
        Ok(Self {
            cfg: CoopNavConfig {
                n_agents: agents.len(),
                max_steps,
            },
            agents,
            landmarks,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn agents(&self) -> &[[f64; 2]] {
        &self.agents
    }

    pub fn landmarks(&self) -> &[[f64; 2]] {
        &self.landmarks
    }

    pub fn config(&self) -> &CoopNavConfig {
        &self.cfg
    }

    /// Shared term: −Σ over landmarks of the distance to the closest agent.
    pub fn coverage_reward(&self) -> f64 {
        -self
            .landmarks
            .iter()
            .map(|&l| self.agents.iter().map(|&a| dist(a, l)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
    }

    fn collisions(&self, i: usize) -> usize {
        let a = self.agents[i];
        self.agents
            .iter()
            .enumerate()
            .filter(|&(j, &b)| j != i && dist(a, b) < COLLISION_RADIUS)
            .count()
    }
}

impl MarkovGame for CoopNav {
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn obs_width(&self) -> usize {
        let n = self.cfg.n_agents;
        2 + 2 * n + 2 * (n - 1).min(2)
    }

    fn observe(&self, agent: usize) -> Result<Observation> {
        let n = self.cfg.n_agents;
        if agent >= n {
            return Err(Error::AgentIndex { agent, n });
        }
        let me = self.agents[agent];
        let mut v = Vec::with_capacity(self.obs_width());
        v.extend_from_slice(&me);
        for l in &self.landmarks {
            v.push(l[0] - me[0]);
            v.push(l[1] - me[1]);
        }
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != agent)
            .map(|j| (dist(me, self.agents[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(2) {
            v.push(self.agents[j][0] - me[0]);
            v.push(self.agents[j][1] - me[1]);
        }
        Ok(Observation { agent, vector: v })
    }

    fn step(&mut self, actions: &JointAction) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        actions.validate(self.cfg.n_agents)?;
        for (pos, &a) in self.agents.iter_mut().zip(&actions.actions) {
            let (dx, dy) = match a {
                0 => (0.0, 0.0),
                1 => (0.0, MOVE_STEP),
                2 => (0.0, -MOVE_STEP),
                3 => (MOVE_STEP, 0.0),
                _ => (-MOVE_STEP, 0.0),
            };
            pos[0] = (pos[0] + dx).clamp(-1.0, 1.0);
            pos[1] = (pos[1] + dy).clamp(-1.0, 1.0);
        }
        self.t += 1;
        let shared = self.coverage_reward();
        let rewards = (0..self.cfg.n_agents).map(|i| shared - self.collisions(i) as f64).collect();
        Ok(StepResult {
            rewards,
            done: self.is_done(),
        })
    }

    fn reset_episode(&mut self) {
        let n = self.cfg.n_agents;
        let rng = &mut self.rng;
        let mut draw = || [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        self.agents = (0..n).map(|_| draw()).collect();
        self.landmarks = (0..n).map(|_| draw()).collect();
        self.t = 0;
    }

    fn time_step(&self) -> usize {
        self.t
    }

    fn is_done(&self) -> bool {
        self.t >= self.cfg.max_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        assert_eq!(coopnav_reset(3, 9).unwrap(), coopnav_reset(3, 9).unwrap());
        assert_ne!(coopnav_reset(3, 9).unwrap(), coopnav_reset(3, 10).unwrap());
    }

    #[test]
    fn zero_agents_is_a_config_error() {
        assert!(matches!(coopnav_reset(0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_agent_layout() {
        let env = coopnav_reset(1, 3).unwrap();
        assert_eq!(env.agents().len(), 1);
        assert_eq!(env.landmarks().len(), 1);
        let o = env.observe(0).unwrap();
        let (a, l) = (env.agents()[0], env.landmarks()[0]);
        assert_eq!(o.vector, vec![a[0], a[1], l[0] - a[0], l[1] - a[1]]);
    }

    #[test]
    fn four_agents_stay_in_bounds() {
        let env = coopnav_reset(4, 7).unwrap();
        let coords: Vec<f64> = env.agents().iter().chain(env.landmarks()).flatten().copied().collect();
        assert_eq!(coords.len(), 16);
        assert!(coords.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn moving_east_advances_x_by_one_step() {
        let mut env = CoopNav::from_positions(vec![[0.0, 0.0]], vec![[0.5, 0.5]], 10, 0).unwrap();
        env.step(&JointAction::uniform_space(vec![3], 5).unwrap()).unwrap();
        assert_eq!(env.agents()[0], [0.1, 0.0]);
    }

    #[test]
    fn agents_on_landmarks_get_zero_distance_term() {
        let pts = vec![[0.5, 0.5], [-0.5, -0.5]];
        let mut env = CoopNav::from_positions(pts.clone(), pts, 10, 0).unwrap();
        let r = env.step(&JointAction::uniform_space(vec![0, 0], 5).unwrap()).unwrap();
        assert_eq!(r.rewards, vec![0.0, 0.0]);
    }

    #[test]
    fn out_of_range_action_names_the_agent() {
        let mut env = coopnav_reset(2, 0).unwrap();
        let ja = JointAction {
            actions: vec![0, 7],
            space: vec![5, 5],
        };
        assert_eq!(
            env.step(&ja).unwrap_err(),
            Error::Action {
                agent: 1,
                action: 7,
                space: 5
            }
        );
    }

    #[test]
    fn collisions_cost_each_agent() {
        let agents = vec![[0.0, 0.0], [0.05, 0.0]];
        let landmarks = vec![[0.0, 0.0], [0.05, 0.0]];
        let mut env = CoopNav::from_positions(agents, landmarks, 10, 0).unwrap();
        let r = env.step(&JointAction::uniform_space(vec![0, 0], 5).unwrap()).unwrap();
        assert_eq!(r.rewards, vec![-1.0, -1.0]);
    }

    #[test]
    fn episode_ends_at_max_steps() {
        let mut env = CoopNav::new(CoopNavConfig { n_agents: 2, max_steps: 3 }, 1).unwrap();
        let stay = JointAction::uniform_space(vec![0, 0], 5).unwrap();
        assert!(!env.step(&stay).unwrap().done);
        assert!(!env.step(&stay).unwrap().done);
        assert!(env.step(&stay).unwrap().done);
        assert!(matches!(env.step(&stay), Err(Error::Contract(_))));
        env.reset_episode();
        assert_eq!(env.time_step(), 0);
    }
}
