use ndarray::{s, Array2};

use super::policy::GaussianPolicy;
use crate::envs::VecEnv;
use crate::rng::StreamRng;
use crate::Result;

/// One rollout of `num_envs * rollout_len` transitions, stored env-major:
/// transition `t` of instance `k` lives at row `k * rollout_len + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub rollout_len: usize,
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// State reached by each transition (before any auto-reset).
    pub next_obs: Array2<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn index(&self, env: usize, t: usize) -> usize {
        env * self.rollout_len + t
    }

    /// Whether the backward recursions must reset after row `i`: the episode
    /// ended, or the rollout window closed.
    pub fn segment_end(&self, i: usize) -> bool {
        self.terminated[i] || self.truncated[i] || (i + 1).is_multiple_of(self.rollout_len)
    }

    /// States whose critic output the targets need: every buffer row, then the
    /// `next_obs` of rows that bootstrap from outside the buffer. The second
    /// vector maps each row to the index of its successor's value (`None` for
    /// terminal transitions).
    pub fn value_states(&self) -> (Array2<f64>, Vec<Option<usize>>) {
        let n = self.len();
        let boot: Vec<usize> = (0..n).filter(|&i| !self.terminated[i] && self.segment_end(i)).collect();
        let d = self.obs.ncols();
        let mut states = Array2::zeros((n + boot.len(), d));
        states.slice_mut(s![..n, ..]).assign(&self.obs);
        let mut next = vec![None; n];
        for (b, &i) in boot.iter().enumerate() {
            states.row_mut(n + b).assign(&self.next_obs.row(i));
            next[i] = Some(n + b);
        }
        for (i, slot) in next.iter_mut().enumerate() {
            if !self.segment_end(i) {
                *slot = Some(i + 1);
            }
        }
        (states, next)
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len().max(1) as f64
    }
}

/// Runs `policy` for `rollout_len` steps in every instance. Instance `k`
/// draws its actions from `action_rngs[k]`.
pub fn collect_rollouts(
    venv: &mut VecEnv,
    policy: &GaussianPolicy,
    rollout_len: usize,
    action_rngs: &mut [StreamRng],
) -> Result<RolloutBuffer> {
    let ne = venv.num_envs();
    let n = ne * rollout_len;
    let mut buf = RolloutBuffer {
        num_envs: ne,
        rollout_len,
        obs: Array2::zeros((n, venv.obs_dim())),
        actions: Array2::zeros((n, venv.act_dim())),
        log_probs: vec![0.0; n],
        rewards: vec![0.0; n],
        terminated: vec![false; n],
        truncated: vec![false; n],
        next_obs: Array2::zeros((n, venv.obs_dim())),
    };
    for t in 0..rollout_len {
        let obs = venv.observations().clone();
        let (actions, log_probs) = policy.sample(obs.view(), action_rngs)?;
        let step = venv.step(actions.view())?;
        for k in 0..ne {
            let i = k * rollout_len + t;
            buf.obs.row_mut(i).assign(&obs.row(k));
            buf.actions.row_mut(i).assign(&actions.row(k));
            buf.next_obs.row_mut(i).assign(&step.final_obs.row(k));
            buf.log_probs[i] = log_probs[k];
            buf.rewards[i] = step.rewards[k];
            buf.terminated[i] = step.terminated[k];
            buf.truncated[i] = step.truncated[k];
        }
    }
    Ok(buf)
}
