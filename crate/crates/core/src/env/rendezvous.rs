//! Rendezvous swarm task: point-mass agents in the square arena `[-1, 1]²`
//! are rewarded for gathering together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DecPomdp;
use crate::error::{Error, Result};

pub const ARENA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RendezvousConfig {
    pub n_agents: usize,
    pub v_max: f64,
    pub max_episode_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub positions: Vec<[f64; 2]>,
    pub step_index: usize,
}

impl WorldState {
    pub fn flatten(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| p.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Rendezvous {
    cfg: RendezvousConfig,
    state: WorldState,
    clamped_actions: u64,
}

/// Negative mean pairwise Euclidean distance; zero for a single agent.
pub fn rendezvous_reward(positions: &[[f64; 2]]) -> f64 {
    let n = positions.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    -2.0 * total / (n * (n - 1)) as f64
}

/// Own position followed by every other agent's offset, in index order.
pub fn observe(positions: &[[f64; 2]], agent: usize) -> Vec<f64> {
    let own = positions[agent];
    let mut obs = Vec::with_capacity(2 * positions.len());
    obs.extend_from_slice(&own);
    for (j, p) in positions.iter().enumerate() {
        if j != agent {
            obs.push(p[0] - own[0]);
            obs.push(p[1] - own[1]);
        }
    }
    obs
}

impl Rendezvous {
    pub fn new(cfg: RendezvousConfig) -> Self {
        Rendezvous {
            state: WorldState {
                positions: vec![[0.0; 2]; cfg.n_agents],
                step_index: 0,
            },
            cfg,
            clamped_actions: 0,
        }
    }

    pub fn config(&self) -> &RendezvousConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Places the agents at explicit positions (clipped to the arena).
    pub fn set_positions(&mut self, positions: &[[f64; 2]]) {
        assert_eq!(positions.len(), self.cfg.n_agents);
        self.state.positions = positions
            .iter()
            .map(|p| [p[0].clamp(-ARENA, ARENA), p[1].clamp(-ARENA, ARENA)])
            .collect();
        self.state.step_index = 0;
    }

    /// Number of action components clamped into `[-1, 1]` so far.
    pub fn clamped_actions(&self) -> u64 {
        self.clamped_actions
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.cfg.n_agents)
            .map(|i| observe(&self.state.positions, i))
            .collect()
    }
}

impl DecPomdp for Rendezvous {
    fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    fn obs_dim(&self) -> usize {
        2 * self.cfg.n_agents
    }

    fn state_dim(&self) -> usize {
        2 * self.cfg.n_agents
    }

    fn max_episode_len(&self) -> usize {
        self.cfg.max_episode_len
    }

    fn state_vector(&self) -> Vec<f64> {
        self.state.flatten()
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state.positions = (0..self.cfg.n_agents)
            .map(|_| [rng.random_range(-ARENA..=ARENA), rng.random_range(-ARENA..=ARENA)])
            .collect();
        self.state.step_index = 0;
        self.observations()
    }

    fn step(&mut self, joint_action: &[[f64; 2]]) -> Result<StepOutcome> {
        if joint_action.len() != self.cfg.n_agents {
            return Err(Error::Dimension {
                layer: "rendezvous step".into(),
                expected: self.cfg.n_agents,
                got: joint_action.len(),
            });
        }
        if self.state.step_index >= self.cfg.max_episode_len {
            return Err(Error::Invalid("step called on a finished episode".into()));
        }
        for (p, a) in self.state.positions.iter_mut().zip(joint_action) {
            for d in 0..2 {
                let mut u = a[d];
                if !(-1.0..=1.0).contains(&u) {
                    self.clamped_actions += 1;
                    u = if u.is_nan() { 0.0 } else { u.clamp(-1.0, 1.0) };
                }
                p[d] = (p[d] + self.cfg.v_max * u).clamp(-ARENA, ARENA);
            }
        }
        self.state.step_index += 1;
        Ok(StepOutcome {
            observations: self.observations(),
            reward: rendezvous_reward(&self.state.positions),
            done: self.state.step_index == self.cfg.max_episode_len,
        })
    }
}
