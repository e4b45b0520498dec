use rand::Rng;

use super::{check_action, Env, EnvStep};
use crate::rng::StreamRng;
use crate::Result;

pub const DT: f64 = 0.05;
pub const HORIZON: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub goal: [f64; 2],
}

impl PointMassState {
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.position[0],
            self.position[1],
            self.velocity[0],
            self.velocity[1],
            self.goal[0],
            self.goal[1],
        ]
    }
}

/// Double-integrator step. The action is clipped to `[-1, 1]^2`.
pub fn pointmass_step(state: &PointMassState, action: [f64; 2]) -> (PointMassState, f64) {
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let mut next = *state;
    for i in 0..2 {
        next.velocity[i] += a[i] * DT;
        next.position[i] += next.velocity[i] * DT;
    }
    let dist2 = (next.position[0] - next.goal[0]).powi(2) + (next.position[1] - next.goal[1]).powi(2);
    let effort = a[0] * a[0] + a[1] * a[1];
    (next, -dist2 - 0.01 * effort)
}

/// Reach a random goal in the plane; time limit of [`HORIZON`] steps.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    state: PointMassState,
    steps: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            state: PointMassState {
                position: [0.0; 2],
                velocity: [0.0; 2],
                goal: [0.0; 2],
            },
            steps: 0,
        }
    }
}

impl PointMassEnv {
    pub fn state(&self) -> &PointMassState {
        &self.state
    }
}

impl Env for PointMassEnv {
    fn obs_dim(&self) -> usize {
        6
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        self.state = PointMassState {
            position: [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
            velocity: [0.0; 2],
            goal: [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
        };
        self.steps = 0;
        self.state.observation()
    }

    fn step(&mut self, action: &[f64], _rng: &mut StreamRng) -> Result<EnvStep> {
        check_action(action, 2)?;
        let (next, reward) = pointmass_step(&self.state, [action[0], action[1]]);
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            obs: next.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= HORIZON,
        })
    }
}
