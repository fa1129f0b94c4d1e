//! MADDPG backbone with the mutual-information reward shaping hook and the
//! M3DDPG perturbation baseline.

mod buffer;
mod learner;
mod rollout;
mod trainer;
mod updates;

pub use buffer::{Batch, EpisodeRecord, ReplayBuffer};
pub use learner::{build_actor, build_critic, AgentNets, Learner, LearnerSettings, UpdateLosses, ACTION_DIM};
pub use rollout::{actor_action, run_episode, stream, RngStreams};
pub use trainer::{load_actors, EpochMetrics, Trainer};
pub use updates::{
    actor_step, critic_step, m3ddpg_perturb, shape_reward, shape_reward_total, td_targets,
    FnCritic, QFunction,
};
