//! Decentralized partially observable environments, the rendezvous task and
//! the defender/adversary partition.

mod history;
mod partition;
mod rendezvous;

pub use history::History;
pub use partition::{compose_perturbed_action, Partition};
pub use rendezvous::{
    observe, rendezvous_reward, Rendezvous, RendezvousConfig, StepOutcome, WorldState, ARENA,
};

use crate::error::Result;

/// Shared-reward multi-agent environment with per-agent observations and
/// two-dimensional continuous actions.
pub trait DecPomdp {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn max_episode_len(&self) -> usize;
    fn state_vector(&self) -> Vec<f64>;
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;
    fn step(&mut self, joint_action: &[[f64; 2]]) -> Result<StepOutcome>;
}
