use ndarray::{Array2, ArrayView2};

use super::{Env, EnvKind};
use crate::rng::{stream, tags, StreamRng};
use crate::{Error, Result};

/// Batched result of stepping every instance once.
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    /// Observation to act on next; an initial state for instances that reset.
    pub obs: Array2<f64>,
    /// The state each transition actually reached, before any reset.
    pub final_obs: Array2<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
}

/// `N_e` independent instances with auto-reset.
///
/// Instance `id` draws episode `e` from the stream `(seed, id, e)`, so its
/// trajectory depends only on the seed, its id and the actions it receives.
pub struct VecEnv {
    kind: EnvKind,
    seed: u64,
    ids: Vec<u64>,
    envs: Vec<Box<dyn Env>>,
    rngs: Vec<StreamRng>,
    episodes: Vec<u64>,
    obs: Array2<f64>,
    running_returns: Vec<f64>,
    finished_returns: Vec<f64>,
}

impl VecEnv {
    pub fn new(kind: EnvKind, num_envs: usize, seed: u64) -> Self {
        Self::with_instance_ids(kind, (0..num_envs as u64).collect(), seed)
    }

    pub fn with_instance_ids(kind: EnvKind, ids: Vec<u64>, seed: u64) -> Self {
        let mut envs: Vec<Box<dyn Env>> = ids.iter().map(|_| kind.make()).collect();
        let obs_dim = kind.make().obs_dim();
        let mut obs = Array2::zeros((ids.len(), obs_dim));
        let mut rngs = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            let mut rng = stream(seed, &[tags::ENV_RESET, id, 0]);
            let o = envs[i].reset(&mut rng);
            obs.row_mut(i).assign(&ndarray::ArrayView1::from(&o));
            rngs.push(rng);
        }
        Self {
            kind,
            seed,
            episodes: vec![0; ids.len()],
            running_returns: vec![0.0; ids.len()],
            finished_returns: Vec::new(),
            ids,
            envs,
            rngs,
            obs,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }

    pub fn act_dim(&self) -> usize {
        self.envs.first().map_or(0, |e| e.act_dim())
    }

    pub fn instance_ids(&self) -> &[u64] {
        &self.ids
    }

    /// Current observations, one row per instance.
    pub fn observations(&self) -> &Array2<f64> {
        &self.obs
    }

    pub fn step(&mut self, actions: ArrayView2<'_, f64>) -> Result<VecStep> {
        let n = self.num_envs();
        if actions.nrows() != n {
            return Err(Error::shape("vectorized actions (rows)", n, actions.nrows()));
        }
        if actions.ncols() != self.act_dim() {
            return Err(Error::shape(
                "vectorized actions (columns)",
                self.act_dim(),
                actions.ncols(),
            ));
        }
        let mut final_obs = Array2::zeros(self.obs.raw_dim());
        let mut rewards = Vec::with_capacity(n);
        let mut terminated = Vec::with_capacity(n);
        let mut truncated = Vec::with_capacity(n);
        for i in 0..n {
            let action = actions.row(i).to_vec();
            let step = self.envs[i].step(&action, &mut self.rngs[i]).map_err(|e| Error::Env {
                index: i,
                source: Box::new(e),
            })?;
            final_obs.row_mut(i).assign(&ndarray::ArrayView1::from(&step.obs));
            self.running_returns[i] += step.reward;
            let done = step.terminated || step.truncated;
            let next = if done {
                self.finished_returns.push(self.running_returns[i]);
                self.running_returns[i] = 0.0;
                self.episodes[i] += 1;
                self.rngs[i] = stream(self.seed, &[tags::ENV_RESET, self.ids[i], self.episodes[i]]);
                self.envs[i].reset(&mut self.rngs[i])
            } else {
                step.obs
            };
            self.obs.row_mut(i).assign(&ndarray::ArrayView1::from(&next));
            rewards.push(step.reward);
            terminated.push(step.terminated);
            truncated.push(step.truncated && !step.terminated);
        }
        Ok(VecStep {
            obs: self.obs.clone(),
            final_obs,
            rewards,
            terminated,
            truncated,
        })
    }

    /// Returns of episodes completed since the last call, in completion order.
    pub fn take_finished_returns(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.finished_returns)
    }
}
