use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::EnvKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Flow-matching critic with truncated sampling and CoV weights.
    Flow,
    /// Single regression critic (standard PPO).
    Point,
    /// Mean of an ensemble of regression critics.
    AvgEnsemble,
    /// Minimum over an ensemble of regression critics.
    MinEnsemble,
    /// Quantile-regression critic; the value is the quantile mean.
    Quantile,
}

impl CriticKind {
    pub const ALL: [CriticKind; 5] = [
        CriticKind::Flow,
        CriticKind::Point,
        CriticKind::AvgEnsemble,
        CriticKind::MinEnsemble,
        CriticKind::Quantile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriticKind::Flow => "flow",
            CriticKind::Point => "point",
            CriticKind::AvgEnsemble => "avg_ensemble",
            CriticKind::MinEnsemble => "min_ensemble",
            CriticKind::Quantile => "quantile",
        }
    }
}

impl fmt::Display for CriticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown critic kind {s:?}")))
    }
}

/// Every training hyperparameter. [`Default`] gives the full-scale values;
/// [`TrainConfig::desk`] scales the batch and networks down for a laptop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub critic: CriticKind,
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub ppo_clip: f64,
    pub velocity_clip: f64,
    pub cov_temperature: f64,
    pub n_value_samples: usize,
    pub truncation: usize,
    pub euler_steps: usize,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub epochs: usize,
    /// Minibatches per epoch; the minibatch size is `num_envs * rollout_len / minibatches`.
    pub minibatches: usize,
    pub learning_rate: f64,
    pub grad_norm: f64,
    pub advantage_normalization: bool,
    pub entropy_coef: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub ensemble_size: usize,
    pub num_quantiles: usize,
    pub huber_kappa: f64,
    pub init_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::PointMass,
            critic: CriticKind::Flow,
            seed: 0,
            gamma: 0.99,
            lambda: 0.95,
            ppo_clip: 0.2,
            velocity_clip: 0.2,
            cov_temperature: 0.1,
            n_value_samples: 10,
            truncation: 1,
            euler_steps: 5,
            num_envs: 1024,
            rollout_len: 16,
            epochs: 4,
            minibatches: 2,
            learning_rate: 5e-4,
            grad_norm: 1.0,
            advantage_normalization: true,
            entropy_coef: 0.0,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![512, 512, 512, 512],
            ensemble_size: 5,
            num_quantiles: 51,
            huber_kappa: 1.0,
            init_log_std: 0.0,
        }
    }
}

impl TrainConfig {
    /// 64 environments, minibatches of 512 and 64-unit networks.
    pub fn desk() -> Self {
        Self {
            num_envs: 64,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            ..Self::default()
        }
    }

    pub fn batch_size(&self) -> usize {
        self.num_envs * self.rollout_len
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size().div_ceil(self.minibatches.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.ppo_clip > 0.0) || !(self.velocity_clip > 0.0) {
            return fail("ppo_clip and velocity_clip must be positive".into());
        }
        if !(self.cov_temperature >= 0.0) {
            return fail("cov_temperature must be non-negative".into());
        }
        if self.n_value_samples < 2 || self.truncation >= self.n_value_samples {
            return fail(format!(
                "need 0 <= truncation < n_value_samples with n >= 2, got m={} n={}",
                self.truncation, self.n_value_samples
            ));
        }
        if self.euler_steps == 0 || self.num_envs == 0 || self.rollout_len == 0 || self.epochs == 0 {
            return fail("euler_steps, num_envs, rollout_len and epochs must be positive".into());
        }
        if self.minibatches == 0 || self.minibatches > self.batch_size() {
            return fail(format!(
                "minibatches must be in [1, {}], got {}",
                self.batch_size(),
                self.minibatches
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_norm > 0.0) {
            return fail("learning_rate and grad_norm must be positive".into());
        }
        if self.ensemble_size == 0 || self.num_quantiles == 0 || !(self.huber_kappa > 0.0) {
            return fail("ensemble_size, num_quantiles and huber_kappa must be positive".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        Ok(())
    }
}
