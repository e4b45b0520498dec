//! Plain PPO with GAE and an MSE value baseline, written against the network,
//! optimizer and environment primitives only. Seeds are drawn from the same
//! streams the trainer uses, so with uniform weights the two must agree.

use std::collections::VecDeque;

use flowcritic::envs::VecEnv;
use flowcritic::nn::{clip_global_norm_in_place, Activation, AdamState, CheckpointEntry, Mlp};
use flowcritic::rl::{clipped_surrogate, collect_rollouts, GaussianPolicy, RolloutBuffer, TrainConfig};
use flowcritic::rng::{stream, tags, StreamRng};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMetrics {
    pub mean_return: Option<f64>,
    pub mean_reward: f64,
    pub critic_loss: f64,
    pub policy_objective: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

pub struct ReferencePpo {
    cfg: TrainConfig,
    venv: VecEnv,
    pub policy: GaussianPolicy,
    policy_adam: AdamState,
    pub value: Mlp,
    value_adam: AdamState,
    action_rngs: Vec<StreamRng>,
    returns: VecDeque<f64>,
    iteration: u64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ReferencePpo {
    pub fn new(cfg: TrainConfig) -> Self {
        let venv = VecEnv::new(cfg.env, cfg.num_envs, cfg.seed);
        let (obs, act) = (venv.obs_dim(), venv.act_dim());
        let policy = GaussianPolicy::seeded(
            obs,
            act,
            &cfg.actor_hidden,
            cfg.init_log_std,
            &mut stream(cfg.seed, &[tags::POLICY_INIT]),
        )
        .unwrap();
        let value = Mlp::seeded(
            obs,
            &cfg.critic_hidden,
            1,
            Activation::Relu,
            &mut stream(cfg.seed, &[tags::CRITIC_INIT, 0]),
        )
        .unwrap();
        Self {
            policy_adam: AdamState::new(policy.param_count(), cfg.learning_rate),
            value_adam: AdamState::for_net(&value, cfg.learning_rate),
            action_rngs: (0..cfg.num_envs as u64)
                .map(|k| stream(cfg.seed, &[tags::ACTION, k]))
                .collect(),
            returns: VecDeque::new(),
            iteration: 0,
            venv,
            policy,
            value,
            cfg,
        }
    }

    fn v(&self, x: &Array2<f64>) -> Vec<f64> {
        self.value.forward_batch(x.view()).unwrap().column(0).to_vec()
    }

    /// Per-instance backward GAE; returns (advantages, value targets).
    fn gae(&self, buf: &RolloutBuffer) -> (Vec<f64>, Vec<f64>) {
        let (gamma, lambda) = (self.cfg.gamma, self.cfg.lambda);
        let t_len = buf.rollout_len;
        let values = self.v(&buf.obs);
        let boot = self.v(&buf.next_obs);
        let mut adv = vec![0.0; buf.len()];
        for k in 0..buf.num_envs {
            let mut running = 0.0;
            for t in (0..t_len).rev() {
                let i = k * t_len + t;
                let cut = buf.terminated[i] || buf.truncated[i] || t == t_len - 1;
                let next_value = if buf.terminated[i] {
                    0.0
                } else if cut {
                    boot[i]
                } else {
                    values[i + 1]
                };
                let delta = buf.rewards[i] + gamma * next_value - values[i];
                running = if cut { delta } else { delta + gamma * lambda * running };
                adv[i] = running;
            }
        }
        let targets = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
        (adv, targets)
    }

    pub fn iteration(&mut self) -> ReferenceMetrics {
        let cfg = self.cfg.clone();
        let buf = collect_rollouts(&mut self.venv, &self.policy, cfg.rollout_len, &mut self.action_rngs).unwrap();
        for r in self.venv.take_finished_returns() {
            if self.returns.len() == 100 {
                self.returns.pop_front();
            }
            self.returns.push_back(r);
        }
        let (mut adv, targets) = self.gae(&buf);
        let n = adv.len() as f64;
        let m = adv.iter().sum::<f64>() / n;
        let sd = (adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
        for a in &mut adv {
            *a = (*a - m) / (sd + 1e-8);
        }

        let mut shuffle = stream(cfg.seed, &[tags::SHUFFLE, self.iteration]);
        self.iteration += 1;
        let (mut closs, mut cnorm, mut obj, mut clip, mut kl, mut anorm) =
            (vec![], vec![], vec![], vec![], vec![], vec![]);
        let n = buf.len();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle);
            for j in 0..cfg.minibatches {
                let batch = &order[j * n / cfg.minibatches..(j + 1) * n / cfg.minibatches];
                let obs = buf.obs.select(Axis(0), batch);
                let b = batch.len() as f64;

                // value regression
                let trace = self.value.forward_trace(obs.view()).unwrap();
                let mut grad = Array2::zeros((batch.len(), 1));
                let mut loss = 0.0;
                for (r, &i) in batch.iter().enumerate() {
                    let diff = trace.output()[[r, 0]] - targets[i];
                    loss += diff * diff;
                    grad[[r, 0]] = 2.0 * diff / b;
                }
                self.value.backward(&trace, grad.view()).unwrap();
                cnorm.push(clip_global_norm_in_place(&mut [self.value.grads_mut()], cfg.grad_norm));
                self.value_adam.step(&mut self.value).unwrap();
                closs.push(loss / b);

                // clipped surrogate
                let actions = buf.actions.select(Axis(0), batch);
                let eval = self.policy.evaluate(obs.view(), actions.view()).unwrap();
                let inv_b = 1.0 / b;
                let (mut surrogate, mut clipped, mut kl_sum) = (0.0, 0usize, 0.0);
                let mut dlogp = vec![0.0; batch.len()];
                for (r, &i) in batch.iter().enumerate() {
                    let log_ratio = eval.log_probs[r] - buf.log_probs[i];
                    let ratio = log_ratio.exp();
                    let (term, dterm) = clipped_surrogate(ratio, adv[i], cfg.ppo_clip);
                    surrogate += term;
                    dlogp[r] = -dterm * ratio * inv_b;
                    clipped += ((ratio - 1.0).abs() > cfg.ppo_clip) as usize;
                    kl_sum += -log_ratio;
                }
                self.policy.backward(&eval, actions.view(), &dlogp, 0.0).unwrap();
                let mut parts = self.policy.parts_mut();
                let norm = {
                    let mut grads: Vec<&mut [f64]> = parts.iter_mut().map(|(_, g)| &mut **g).collect();
                    clip_global_norm_in_place(&mut grads, cfg.grad_norm)
                };
                self.policy_adam.step_parts(&mut parts).unwrap();
                obj.push(surrogate * inv_b);
                clip.push(clipped as f64 * inv_b);
                kl.push(kl_sum * inv_b);
                anorm.push(norm);
            }
        }
        ReferenceMetrics {
            mean_return: (!self.returns.is_empty())
                .then(|| self.returns.iter().sum::<f64>() / self.returns.len() as f64),
            mean_reward: buf.rewards.iter().sum::<f64>() / n as f64,
            critic_loss: mean(&closs),
            policy_objective: mean(&obj),
            clip_fraction: mean(&clip),
            approx_kl: mean(&kl),
            actor_grad_norm: mean(&anorm),
            critic_grad_norm: mean(&cnorm),
        }
    }
}

/// Trainer metrics restricted to the fields the reference reports.
pub fn project(m: &flowcritic::rl::IterationMetrics) -> ReferenceMetrics {
    ReferenceMetrics {
        mean_return: m.mean_return,
        mean_reward: m.mean_reward,
        critic_loss: m.critic_loss,
        policy_objective: m.policy_objective,
        clip_fraction: m.clip_fraction,
        approx_kl: m.approx_kl,
        actor_grad_norm: m.actor_grad_norm,
        critic_grad_norm: m.critic_grad_norm,
    }
}

/// Runs both learners side by side and returns the first iteration whose
/// metrics or parameters differ in any bit, if any.
pub fn first_divergence(cfg: TrainConfig, iterations: usize) -> Option<(usize, String)> {
    let mut trainer = flowcritic::rl::Trainer::new(cfg.clone()).unwrap();
    let mut reference = ReferencePpo::new(cfg);
    for it in 0..iterations {
        let ours = trainer.train_iteration().unwrap();
        let theirs = reference.iteration();
        let ours = project(&ours);
        if format!("{ours:?}") != format!("{theirs:?}") {
            return Some((it, format!("trainer {ours:?}\nreference {theirs:?}")));
        }
        if trainer.policy() != &reference.policy {
            return Some((it, "policy parameters differ".into()));
        }
        let value = CheckpointEntry::from_mlp("critic.point", &reference.value);
        if trainer.checkpoint().get("critic.point") != Some(&value) {
            return Some((it, "value parameters differ".into()));
        }
    }
    None
}
