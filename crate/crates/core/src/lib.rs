//! FlowCritic: a flow-matching generative value critic for on-policy RL.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: multilayer perceptrons with hand-written reverse-mode gradients,
//!   Adam, global gradient-norm clipping and a binary checkpoint format.
//! - [`flow`]: the flow-matching critic itself (interpolation path, Euler
//!   sampler, truncated value estimate, CoV weights, clipped CFM loss).
//! - [`envs`]: the single-step stochastic benchmark plus two small
//!   continuous-control tasks behind a vectorized interface.
//! - [`rl`]: rollouts, distributional targets, GAE, the weighted PPO
//!   objective, baseline critics and the training loop.
//! - [`analysis`]: Wasserstein distances, tabular distributional Bellman
//!   iteration, gradient-variance checks and the toy error maps.

// `!(x > 0.0)` is used on purpose to reject NaN alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod envs;
pub mod error;
pub mod flow;
pub mod nn;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
