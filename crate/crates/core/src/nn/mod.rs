//! Minimal differentiable substrate: MLPs, Adam and gradient clipping.

mod adam;
pub mod checkpoint;
mod clip;
mod mlp;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use clip::{clip_global_norm, clip_global_norm_in_place, global_norm};
pub use mlp::{Activation, Mlp, Trace};
