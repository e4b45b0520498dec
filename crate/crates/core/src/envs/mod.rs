//! Built-in environments and the vectorized wrapper.
//!
//! `toy_single_step` is the single-step stochastic benchmark. `pointmass`
//! and `pendulum` are small continuous-control tasks with invented (not
//! benchmark-derived) dynamics and rewards.

mod pendulum;
mod pointmass;
mod toy;
mod vec_env;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::{Error, Result};

pub use pendulum::PendulumEnv;
pub use pointmass::{pointmass_step, PointMassEnv, PointMassState};
pub use toy::{toy_reward, toy_sample_state, toy_true_value, SingleStepEnv, ToyNoise, ToyRegion};
pub use vec_env::{VecEnv, VecStep};

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    /// The state reached by the transition (before any auto-reset).
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode ended in a true terminal state.
    pub terminated: bool,
    /// Episode cut by a time limit.
    pub truncated: bool,
}

pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64>;
    fn step(&mut self, action: &[f64], rng: &mut StreamRng) -> Result<EnvStep>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "toy_single_step")]
    ToySingleStep,
    #[serde(rename = "pointmass")]
    PointMass,
    #[serde(rename = "pendulum")]
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::ToySingleStep, EnvKind::PointMass, EnvKind::Pendulum];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::ToySingleStep => "toy_single_step",
            EnvKind::PointMass => "pointmass",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvKind::ToySingleStep => Box::new(SingleStepEnv::default()),
            EnvKind::PointMass => Box::new(PointMassEnv::default()),
            EnvKind::Pendulum => Box::new(PendulumEnv::default()),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown environment {s:?} (expected toy_single_step, pointmass or pendulum)"
            ))
        })
    }
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::shape("action", dim, action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite action".into()));
    }
    Ok(())
}
