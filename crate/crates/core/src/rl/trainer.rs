use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::buffer::{collect_rollouts, RolloutBuffer};
use super::config::TrainConfig;
use super::critics::{build_critic, ValueCritic};
use super::objective::weighted_ppo_objective;
use super::policy::GaussianPolicy;
use super::targets::{empirical_return_targets, gae_advantages, normalize_advantages};
use crate::envs::VecEnv;
use crate::flow::{cov_weight, normalize_weights};
use crate::nn::{clip_global_norm_in_place, AdamState, Checkpoint, CheckpointEntry};
use crate::rng::{stream, tags, StreamRng};
use crate::{Error, Result};

/// Completed episodes averaged into `mean_return`.
const RETURN_WINDOW: usize = 100;

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Mean of the last 100 completed episode returns.
    pub mean_return: Option<f64>,
    pub mean_reward: f64,
    pub critic_loss: f64,
    pub policy_objective: f64,
    /// Share of policy ratios outside the clip band.
    pub clip_fraction: f64,
    /// Share of flow predictions outside the velocity clip band.
    pub velocity_clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_cov: Option<f64>,
    pub mean_weight: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    /// Rejected updates so far, over the whole run.
    pub numeric_aborts: u64,
    /// The iteration stopped before any update.
    pub aborted: bool,
}

#[derive(Default)]
struct Means {
    sum: f64,
    count: usize,
}

impl Means {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn get(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Stateful on-policy learner. Randomness is split into streams keyed by the
/// seed: policy init, critic init per member, actions per instance, value
/// samples per (iteration, state), shuffling and flow paths per iteration.
pub struct Trainer {
    cfg: TrainConfig,
    venv: VecEnv,
    policy: GaussianPolicy,
    policy_adam: AdamState,
    critic: Box<dyn ValueCritic>,
    action_rngs: Vec<StreamRng>,
    iteration: u64,
    env_steps: u64,
    episodes: u64,
    numeric_aborts: u64,
    recent_returns: VecDeque<f64>,
    last_weights: Vec<f64>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let venv = VecEnv::new(cfg.env, cfg.num_envs, cfg.seed);
        let policy = GaussianPolicy::seeded(
            venv.obs_dim(),
            venv.act_dim(),
            &cfg.actor_hidden,
            cfg.init_log_std,
            &mut stream(cfg.seed, &[tags::POLICY_INIT]),
        )?;
        let policy_adam = AdamState::new(policy.param_count(), cfg.learning_rate);
        let critic = build_critic(&cfg, venv.obs_dim())?;
        let action_rngs = (0..cfg.num_envs as u64)
            .map(|k| stream(cfg.seed, &[tags::ACTION, k]))
            .collect();
        Ok(Self {
            venv,
            policy,
            policy_adam,
            critic,
            action_rngs,
            iteration: 0,
            env_steps: 0,
            episodes: 0,
            numeric_aborts: 0,
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
            last_weights: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critic(&self) -> &dyn ValueCritic {
        self.critic.as_ref()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Normalized weights of the most recent iteration.
    pub fn last_weights(&self) -> &[f64] {
        &self.last_weights
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut entries = vec![
            CheckpointEntry::from_mlp("policy.mean", &self.policy.mean_net),
            CheckpointEntry::raw("policy.log_std", &self.policy.log_std),
        ];
        entries.extend(self.critic.checkpoint_entries());
        Checkpoint { entries }
    }

    /// Collect, build targets and weights, then run the epochs of minibatch
    /// critic and policy updates.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        let buffer = collect_rollouts(
            &mut self.venv,
            &self.policy,
            self.cfg.rollout_len,
            &mut self.action_rngs,
        )?;
        let finished = self.venv.take_finished_returns();
        self.episodes += finished.len() as u64;
        for r in finished {
            if self.recent_returns.len() == RETURN_WINDOW {
                self.recent_returns.pop_front();
            }
            self.recent_returns.push_back(r);
        }
        self.env_steps += buffer.len() as u64;
        let iteration = self.iteration;
        self.iteration += 1;

        let mut metrics = IterationMetrics {
            iteration,
            env_steps: self.env_steps,
            episodes: self.episodes,
            mean_return: (!self.recent_returns.is_empty())
                .then(|| self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64),
            mean_reward: buffer.mean_reward(),
            critic_loss: 0.0,
            policy_objective: 0.0,
            clip_fraction: 0.0,
            velocity_clip_fraction: 0.0,
            approx_kl: 0.0,
            mean_cov: None,
            mean_weight: 0.0,
            min_weight: 0.0,
            max_weight: 0.0,
            actor_grad_norm: 0.0,
            critic_grad_norm: 0.0,
            numeric_aborts: self.numeric_aborts,
            aborted: false,
        };

        let prepared = match self.prepare(&buffer, iteration) {
            Ok(p) => p,
            Err(e) if e.is_numeric() => {
                self.numeric_aborts += 1;
                metrics.numeric_aborts = self.numeric_aborts;
                metrics.aborted = true;
                return Ok(metrics);
            }
            Err(e) => return Err(e),
        };
        metrics.mean_cov = prepared.mean_cov;
        let w = &prepared.weights;
        metrics.mean_weight = w.iter().sum::<f64>() / w.len() as f64;
        metrics.min_weight = w.iter().copied().fold(f64::INFINITY, f64::min);
        metrics.max_weight = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        self.update(&buffer, &prepared, iteration, &mut metrics)?;
        metrics.numeric_aborts = self.numeric_aborts;
        self.last_weights = prepared.weights;
        Ok(metrics)
    }

    fn prepare(&mut self, buffer: &RolloutBuffer, iteration: u64) -> Result<Prepared> {
        let cfg = &self.cfg;
        let est = self.critic.estimate(buffer, cfg, iteration)?;
        let ends: Vec<bool> = (0..buffer.len()).map(|i| buffer.segment_end(i)).collect();
        let mut advantages = gae_advantages(
            &buffer.rewards,
            &est.values,
            &est.next_values,
            &buffer.terminated,
            &ends,
            cfg.gamma,
            cfg.lambda,
        )?;
        if let Some(i) = advantages.iter().position(|a| !a.is_finite()) {
            return Err(Error::Numeric(format!("non-finite advantage at row {i}")));
        }
        let targets = match est.targets {
            Some(t) => t,
            None => empirical_return_targets(&advantages, &est.values),
        };
        let (weights, mean_cov) = match &est.covs {
            Some(covs) => {
                // shifting by the smallest CoV cancels in the normalization
                // and keeps the largest raw weight at one
                let min = covs.iter().copied().fold(f64::INFINITY, f64::min);
                let raw: Vec<f64> = covs
                    .iter()
                    .map(|&k| cov_weight(k - min, cfg.cov_temperature).max(f64::MIN_POSITIVE))
                    .collect();
                let weights = normalize_weights(&raw).map_err(|e| Error::Numeric(e.to_string()))?;
                (weights, Some(covs.iter().sum::<f64>() / covs.len() as f64))
            }
            None => (vec![1.0; buffer.len()], None),
        };
        if cfg.advantage_normalization {
            normalize_advantages(&mut advantages);
        }
        Ok(Prepared {
            advantages,
            targets,
            weights,
            mean_cov,
        })
    }

    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        prepared: &Prepared,
        iteration: u64,
        metrics: &mut IterationMetrics,
    ) -> Result<()> {
        let cfg = self.cfg.clone();
        let n = buffer.len();
        let mut shuffle_rng = stream(cfg.seed, &[tags::SHUFFLE, iteration]);
        let mut path_rng = stream(cfg.seed, &[tags::CFM_PATH, iteration]);
        let (mut critic_loss, mut critic_norm, mut vclip) = (Means::default(), Means::default(), Means::default());
        let (mut objective, mut actor_norm, mut clip, mut kl) =
            (Means::default(), Means::default(), Means::default(), Means::default());

        self.critic.begin_update();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            for j in 0..cfg.minibatches {
                let batch = &order[j * n / cfg.minibatches..(j + 1) * n / cfg.minibatches];
                match self
                    .critic
                    .update(buffer, &prepared.targets, batch, &cfg, &mut path_rng)
                {
                    Ok(u) => {
                        critic_loss.push(u.loss);
                        critic_norm.push(u.grad_norm);
                        vclip.push(u.clip_fraction);
                    }
                    Err(e) if e.is_numeric() => self.numeric_aborts += 1,
                    Err(e) => return Err(e),
                }
                match self.policy_step(buffer, prepared, batch, &cfg) {
                    Ok((terms, norm)) => {
                        objective.push(terms.objective);
                        clip.push(terms.clip_fraction);
                        kl.push(terms.approx_kl);
                        actor_norm.push(norm);
                    }
                    Err(e) if e.is_numeric() => {
                        self.policy.zero_grad();
                        self.numeric_aborts += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        metrics.critic_loss = critic_loss.get();
        metrics.critic_grad_norm = critic_norm.get();
        metrics.velocity_clip_fraction = vclip.get();
        metrics.policy_objective = objective.get();
        metrics.clip_fraction = clip.get();
        metrics.approx_kl = kl.get();
        metrics.actor_grad_norm = actor_norm.get();
        Ok(())
    }

    fn policy_step(
        &mut self,
        buffer: &RolloutBuffer,
        prepared: &Prepared,
        batch: &[usize],
        cfg: &TrainConfig,
    ) -> Result<(super::objective::PpoTerms, f64)> {
        let pick = |v: &[f64]| batch.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let obs = buffer.obs.select(ndarray::Axis(0), batch);
        let actions = buffer.actions.select(ndarray::Axis(0), batch);
        let terms = weighted_ppo_objective(
            &mut self.policy,
            obs.view(),
            actions.view(),
            &pick(&buffer.log_probs),
            &pick(&prepared.advantages),
            &pick(&prepared.weights),
            cfg.ppo_clip,
            cfg.entropy_coef,
        )?;
        let mut parts = self.policy.parts_mut();
        let norm = {
            let mut grads: Vec<&mut [f64]> = parts.iter_mut().map(|(_, g)| &mut **g).collect();
            clip_global_norm_in_place(&mut grads, cfg.grad_norm)
        };
        self.policy_adam.step_parts(&mut parts)?;
        Ok((terms, norm))
    }
}

struct Prepared {
    advantages: Vec<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    mean_cov: Option<f64>,
}
