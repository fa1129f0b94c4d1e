//! Dense MLP engine: parameters, forward/backward, Adam, checkpoints.

mod adam;
mod checkpoint;
mod mlp;
mod param;

pub use adam::{adam_step, clip_grad_norm, AdamConfig};
pub use checkpoint::{Checkpoint, MAGIC, VERSION_PLAIN, VERSION_WITH_PARTITION};
pub use mlp::{Activation, Net};
pub use param::{ParamEntry, ParamStore};
