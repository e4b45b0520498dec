use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Env, EnvStep};
use crate::rng::{standard_normal, StreamRng};
use crate::Result;

const BUMP_HEIGHT: f64 = 1.5;
const BUMP_POS: [f64; 2] = [0.8, 0.8];
const BUMP_NEG: [f64; 2] = [-0.8, -0.8];
const LENGTH_SCALE: f64 = 0.5;

/// Expected reward: a positive and a negative Gaussian bump.
pub fn toy_true_value(x: f64, y: f64) -> f64 {
    let bump = |c: [f64; 2]| {
        let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
        (-d2 / (2.0 * LENGTH_SCALE * LENGTH_SCALE)).exp()
    };
    BUMP_HEIGHT * bump(BUMP_POS) - BUMP_HEIGHT * bump(BUMP_NEG)
}

/// Observation noise of the single-step task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyNoise {
    /// Probability of the wide component inside the noisy disk.
    pub mixture_weight: f64,
    pub sigma_narrow: f64,
    pub sigma_wide: f64,
    pub sigma_outside: f64,
    pub noisy_radius: f64,
}

impl Default for ToyNoise {
    fn default() -> Self {
        Self {
            mixture_weight: 0.2,
            sigma_narrow: 0.05,
            sigma_wide: 10.0,
            sigma_outside: 0.01,
            noisy_radius: 1.0,
        }
    }
}

impl ToyNoise {
    /// Standard deviation of the reward drawn at `s`.
    pub fn draw_sigma<R: Rng + ?Sized>(&self, s: [f64; 2], rng: &mut R) -> f64 {
        if s[0].hypot(s[1]) <= self.noisy_radius {
            if rng.random::<f64>() < self.mixture_weight {
                self.sigma_wide
            } else {
                self.sigma_narrow
            }
        } else {
            self.sigma_outside
        }
    }
}

/// Observed reward: `N(V*(s), sigma^2)` with the mixture noise model.
pub fn toy_reward<R: Rng + ?Sized>(s: [f64; 2], noise: &ToyNoise, rng: &mut R) -> f64 {
    let sigma = noise.draw_sigma(s, rng);
    toy_true_value(s[0], s[1]) + sigma * standard_normal(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyRegion {
    /// `[-2, 2]^2`
    Train,
    /// `[-3, 3]^2`
    Full,
}

impl ToyRegion {
    pub fn half_width(self) -> f64 {
        match self {
            ToyRegion::Train => 2.0,
            ToyRegion::Full => 3.0,
        }
    }
}

pub fn toy_sample_state<R: Rng + ?Sized>(rng: &mut R, region: ToyRegion) -> [f64; 2] {
    let h = region.half_width();
    [rng.random_range(-h..=h), rng.random_range(-h..=h)]
}

/// One-step episodes; the single action is ignored.
#[derive(Debug, Clone)]
pub struct SingleStepEnv {
    pub region: ToyRegion,
    pub noise: ToyNoise,
    state: [f64; 2],
}

impl Default for SingleStepEnv {
    fn default() -> Self {
        Self {
            region: ToyRegion::Train,
            noise: ToyNoise::default(),
            state: [0.0, 0.0],
        }
    }
}

impl Env for SingleStepEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        self.state = toy_sample_state(rng, self.region);
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64], rng: &mut StreamRng) -> Result<EnvStep> {
        check_action(action, 1)?;
        Ok(EnvStep {
            obs: self.state.to_vec(),
            reward: toy_reward(self.state, &self.noise, rng),
            terminated: true,
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn true_value_examples() {
        assert!(toy_true_value(0.0, 0.0).abs() < 1e-15);
        let expected = 1.5 - 1.5 * (-10.24f64).exp();
        assert!((toy_true_value(0.8, 0.8) - expected).abs() < 1e-15);
        assert!((toy_true_value(0.8, 0.8) - 1.49995).abs() < 1e-5);
        for (x, y) in [(0.3, -1.2), (2.0, 2.5), (-0.7, 0.1)] {
            assert!((toy_true_value(x, y) + toy_true_value(-x, -y)).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_boundary_is_inclusive() {
        let noise = ToyNoise::default();
        let mut rng = stream(0, &[]);
        // On the unit circle only the disk's two sigmas may appear.
        for _ in 0..200 {
            let sigma = noise.draw_sigma([1.0, 0.0], &mut rng);
            assert!(sigma == 0.05 || sigma == 10.0);
        }
        assert_eq!(noise.draw_sigma([1.0 + 1e-12, 0.0], &mut rng), 0.01);
    }

    #[test]
    fn states_stay_in_region() {
        let mut rng = stream(1, &[]);
        for region in [ToyRegion::Train, ToyRegion::Full] {
            for _ in 0..1000 {
                let s = toy_sample_state(&mut rng, region);
                assert!(s.iter().all(|v| v.abs() <= region.half_width()));
            }
        }
        let a: Vec<_> = (0..5)
            .map({
                let mut r = stream(2, &[]);
                move |_| toy_sample_state(&mut r, ToyRegion::Train)
            })
            .collect();
        let b: Vec<_> = (0..5)
            .map({
                let mut r = stream(2, &[]);
                move |_| toy_sample_state(&mut r, ToyRegion::Train)
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn episodes_last_one_step() {
        let mut env = SingleStepEnv::default();
        let mut rng = stream(3, &[]);
        let s = env.reset(&mut rng);
        let step = env.step(&[0.0], &mut rng).unwrap();
        assert!(step.terminated && !step.truncated);
        assert_eq!(step.obs, s);
    }
}
