use std::f64::consts::PI;

use rand::Rng;

use super::{check_action, Env, EnvStep};
use crate::rng::StreamRng;
use crate::Result;

const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
pub const HORIZON: usize = 200;

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-limited swing-up; the action in `[-1, 1]` scales the max torque.
#[derive(Debug, Clone, Default)]
pub struct PendulumEnv {
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl PendulumEnv {
    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for PendulumEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        self.theta = rng.random_range(-PI..=PI);
        self.theta_dot = rng.random_range(-1.0..=1.0);
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64], _rng: &mut StreamRng) -> Result<EnvStep> {
        check_action(action, 1)?;
        let u = action[0].clamp(-1.0, 1.0) * MAX_TORQUE;
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let acc = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        self.steps += 1;
        Ok(EnvStep {
            obs: self.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= HORIZON,
        })
    }
}
