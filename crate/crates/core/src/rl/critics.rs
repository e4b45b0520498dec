//! The flow critic and the regression baselines behind one trait.

use ndarray::{Array2, ArrayView2};

use super::buffer::RolloutBuffer;
use super::config::{CriticKind, TrainConfig};
use super::targets::{dist_return_targets, dist_td_sample};
use crate::flow::{sample_states, FlowCriticModel, FlowTrainingSample};
use crate::nn::{clip_global_norm_in_place, Activation, AdamState, CheckpointEntry, Mlp};
use crate::rng::{stream, tags, StreamRng};
use crate::{Error, Result};

/// Critic outputs needed to build advantages and targets for one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEstimates {
    /// Value of every buffer row's state.
    pub values: Vec<f64>,
    /// Value of each row's successor; zero at terminal transitions.
    pub next_values: Vec<f64>,
    /// Coefficient of variation per row, for critics that produce samples.
    pub covs: Option<Vec<f64>>,
    /// Critic-specific regression targets; `None` means use advantage + value.
    pub targets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CriticUpdate {
    pub loss: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

pub trait ValueCritic: Send {
    fn kind(&self) -> CriticKind;

    fn estimate(&mut self, buffer: &RolloutBuffer, cfg: &TrainConfig, iteration: u64) -> Result<CriticEstimates>;

    /// Called once per iteration before the first minibatch update.
    fn begin_update(&mut self) {}

    /// One optimizer step on the buffer rows in `batch`.
    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        targets: &[f64],
        batch: &[usize],
        cfg: &TrainConfig,
        rng: &mut StreamRng,
    ) -> Result<CriticUpdate>;

    fn checkpoint_entries(&self) -> Vec<CheckpointEntry>;
}

/// Builds the critic named by `cfg.critic`. Member `i` is initialized from
/// the stream `(seed, CRITIC_INIT, i)`.
pub fn build_critic(cfg: &TrainConfig, obs_dim: usize) -> Result<Box<dyn ValueCritic>> {
    let init = |i: u64| stream(cfg.seed, &[tags::CRITIC_INIT, i]);
    let regressor = |i: u64, out: usize| -> Result<(Mlp, AdamState)> {
        let net = Mlp::seeded(obs_dim, &cfg.critic_hidden, out, Activation::Relu, &mut init(i))?;
        let adam = AdamState::for_net(&net, cfg.learning_rate);
        Ok((net, adam))
    };
    Ok(match cfg.critic {
        CriticKind::Flow => {
            let model = FlowCriticModel::seeded(
                obs_dim,
                &cfg.critic_hidden,
                cfg.euler_steps,
                cfg.velocity_clip,
                &mut init(0),
            )?;
            let adam = AdamState::for_net(&model.velocity_net, cfg.learning_rate);
            Box::new(FlowValueCritic { model, adam })
        }
        CriticKind::Point => {
            let (net, adam) = regressor(0, 1)?;
            Box::new(PointCritic { net, adam })
        }
        CriticKind::AvgEnsemble | CriticKind::MinEnsemble => {
            let mode = if cfg.critic == CriticKind::AvgEnsemble {
                EnsembleMode::Average
            } else {
                EnsembleMode::Minimum
            };
            let members = (0..cfg.ensemble_size as u64)
                .map(|i| regressor(i, 1))
                .collect::<Result<Vec<_>>>()?;
            Box::new(EnsembleCritic { members, mode })
        }
        CriticKind::Quantile => {
            let (net, adam) = regressor(0, cfg.num_quantiles)?;
            Box::new(QuantileCritic {
                taus: quantile_midpoints(cfg.num_quantiles),
                net,
                adam,
                kappa: cfg.huber_kappa,
            })
        }
    })
}

fn rows(buffer: &RolloutBuffer, batch: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), buffer.obs.ncols()), |(r, c)| buffer.obs[[batch[r], c]])
}

fn clip_and_step(net: &mut Mlp, adam: &mut AdamState, max_norm: f64) -> Result<f64> {
    let norm = clip_global_norm_in_place(&mut [net.grads_mut()], max_norm);
    adam.step(net)?;
    Ok(norm)
}

fn split_values(all: &[f64], n: usize, next: &[Option<usize>]) -> (Vec<f64>, Vec<f64>) {
    let values = all[..n].to_vec();
    let next_values = next.iter().map(|j| j.map_or(0.0, |j| all[j])).collect();
    (values, next_values)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite {what} at row {i}"))),
        None => Ok(()),
    }
}

/// Mean-squared-error step for a scalar regressor; returns (loss, grad norm).
fn regress(
    net: &mut Mlp,
    adam: &mut AdamState,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    max_norm: f64,
) -> Result<(f64, f64)> {
    let trace = net.forward_trace(x)?;
    let out = trace.output();
    let b = y.len() as f64;
    let mut grad = Array2::zeros((y.len(), 1));
    let mut loss = 0.0;
    for (i, &target) in y.iter().enumerate() {
        let diff = out[[i, 0]] - target;
        loss += diff * diff;
        grad[[i, 0]] = 2.0 * diff / b;
    }
    let loss = loss / b;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite regression loss".into()));
    }
    net.backward(&trace, grad.view())?;
    let norm = clip_and_step(net, adam, max_norm)?;
    Ok((loss, norm))
}

/// Flow-matching critic: truncated sample means as values, sample-level
/// return targets, clipped flow loss.
pub struct FlowValueCritic {
    pub model: FlowCriticModel,
    adam: AdamState,
}

impl ValueCritic for FlowValueCritic {
    fn kind(&self) -> CriticKind {
        CriticKind::Flow
    }

    fn estimate(&mut self, buffer: &RolloutBuffer, cfg: &TrainConfig, iteration: u64) -> Result<CriticEstimates> {
        let (states, next) = buffer.value_states();
        let seed = cfg.seed;
        let samples = sample_states(
            &self.model.velocity_net,
            states.view(),
            cfg.n_value_samples,
            cfg.truncation,
            cfg.euler_steps,
            |j| stream(seed, &[tags::VALUE_SAMPLES, iteration, j as u64]),
        )?;
        let n = buffer.len();
        let truncated: Vec<f64> = samples.iter().map(|s| s.set.truncated_value).collect();
        let pairing: Vec<f64> = samples.iter().map(|s| s.pairing_sample).collect();
        let (values, next_values) = split_values(&truncated, n, &next);
        let (z_cur, z_next) = split_values(&pairing, n, &next);
        let zeta: Vec<f64> = (0..n)
            .map(|i| dist_td_sample(buffer.rewards[i], cfg.gamma, z_next[i], z_cur[i], next[i].is_none()))
            .collect();
        let ends: Vec<bool> = (0..n).map(|i| buffer.segment_end(i)).collect();
        let targets = dist_return_targets(&zeta, &z_cur, cfg.gamma * cfg.lambda, &ends)?;
        check_finite(&targets, "distributional target")?;
        Ok(CriticEstimates {
            values,
            next_values,
            covs: Some(samples[..n].iter().map(|s| s.set.cov).collect()),
            targets: Some(targets),
        })
    }

    fn begin_update(&mut self) {
        self.model.snapshot_target();
    }

    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        targets: &[f64],
        batch: &[usize],
        cfg: &TrainConfig,
        rng: &mut StreamRng,
    ) -> Result<CriticUpdate> {
        let samples = batch
            .iter()
            .map(|&i| FlowTrainingSample::draw(buffer.obs.row(i).to_vec(), targets[i], rng))
            .collect::<Result<Vec<_>>>()?;
        let loss = self.model.clipped_cfm_loss(&samples)?;
        let grad_norm = clip_and_step(&mut self.model.velocity_net, &mut self.adam, cfg.grad_norm)?;
        Ok(CriticUpdate {
            loss: loss.loss,
            grad_norm,
            clip_fraction: loss.clip_fraction,
        })
    }

    fn checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        vec![CheckpointEntry::from_mlp("critic.velocity", &self.model.velocity_net)]
    }
}

/// Single MSE regression critic.
pub struct PointCritic {
    pub net: Mlp,
    adam: AdamState,
}

impl ValueCritic for PointCritic {
    fn kind(&self) -> CriticKind {
        CriticKind::Point
    }

    fn estimate(&mut self, buffer: &RolloutBuffer, _cfg: &TrainConfig, _iteration: u64) -> Result<CriticEstimates> {
        let (states, next) = buffer.value_states();
        let out = self.net.forward_batch(states.view())?;
        let all: Vec<f64> = out.column(0).to_vec();
        check_finite(&all, "value")?;
        let (values, next_values) = split_values(&all, buffer.len(), &next);
        Ok(CriticEstimates {
            values,
            next_values,
            covs: None,
            targets: None,
        })
    }

    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        targets: &[f64],
        batch: &[usize],
        cfg: &TrainConfig,
        _rng: &mut StreamRng,
    ) -> Result<CriticUpdate> {
        let x = rows(buffer, batch);
        let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
        let (loss, grad_norm) = regress(&mut self.net, &mut self.adam, x.view(), &y, cfg.grad_norm)?;
        Ok(CriticUpdate {
            loss,
            grad_norm,
            clip_fraction: 0.0,
        })
    }

    fn checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        vec![CheckpointEntry::from_mlp("critic.point", &self.net)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    Average,
    Minimum,
}

/// Combines member outputs for one state.
pub fn ensemble_value(outputs: &[f64], mode: EnsembleMode) -> f64 {
    match mode {
        EnsembleMode::Average => outputs.iter().sum::<f64>() / outputs.len() as f64,
        EnsembleMode::Minimum => outputs.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Independently initialized regression critics combined by mean or minimum.
pub struct EnsembleCritic {
    members: Vec<(Mlp, AdamState)>,
    pub mode: EnsembleMode,
}

impl EnsembleCritic {
    pub fn members(&self) -> impl Iterator<Item = &Mlp> {
        self.members.iter().map(|(net, _)| net)
    }
}

impl ValueCritic for EnsembleCritic {
    fn kind(&self) -> CriticKind {
        match self.mode {
            EnsembleMode::Average => CriticKind::AvgEnsemble,
            EnsembleMode::Minimum => CriticKind::MinEnsemble,
        }
    }

    fn estimate(&mut self, buffer: &RolloutBuffer, _cfg: &TrainConfig, _iteration: u64) -> Result<CriticEstimates> {
        let (states, next) = buffer.value_states();
        let outs = self
            .members
            .iter()
            .map(|(net, _)| net.forward_batch(states.view()))
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<f64> = (0..states.nrows())
            .map(|r| {
                let per: Vec<f64> = outs.iter().map(|o| o[[r, 0]]).collect();
                ensemble_value(&per, self.mode)
            })
            .collect();
        check_finite(&all, "value")?;
        let (values, next_values) = split_values(&all, buffer.len(), &next);
        Ok(CriticEstimates {
            values,
            next_values,
            covs: None,
            targets: None,
        })
    }

    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        targets: &[f64],
        batch: &[usize],
        cfg: &TrainConfig,
        _rng: &mut StreamRng,
    ) -> Result<CriticUpdate> {
        let x = rows(buffer, batch);
        let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
        let mut loss = 0.0;
        let mut grad_norm = 0.0;
        for (net, adam) in &mut self.members {
            let (l, g) = regress(net, adam, x.view(), &y, cfg.grad_norm)?;
            loss += l;
            grad_norm += g;
        }
        let k = self.members.len() as f64;
        Ok(CriticUpdate {
            loss: loss / k,
            grad_norm: grad_norm / k,
            clip_fraction: 0.0,
        })
    }

    fn checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, (net, _))| CheckpointEntry::from_mlp(format!("critic.member{i}"), net))
            .collect()
    }
}

/// Quantile levels `(2i - 1) / (2N)` for `i = 1..=N`.
pub fn quantile_midpoints(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect()
}

/// Quantile-Huber loss of one target against predicted quantiles, averaged
/// over quantiles, with its gradient with respect to each quantile.
pub fn quantile_huber_loss(quantiles: &[f64], taus: &[f64], target: f64, kappa: f64) -> (f64, Vec<f64>) {
    let n = quantiles.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(quantiles.len());
    for (&q, &tau) in quantiles.iter().zip(taus) {
        let u = target - q;
        let weight = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
        let (huber, dhuber) = if u.abs() <= kappa {
            (0.5 * u * u, u)
        } else {
            (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
        };
        loss += weight * huber / kappa;
        // d/dq = -d/du
        grad.push(-weight * dhuber / kappa / n);
    }
    (loss / n, grad)
}

/// Quantile-regression critic; its value is the mean of all quantiles.
pub struct QuantileCritic {
    pub net: Mlp,
    adam: AdamState,
    taus: Vec<f64>,
    kappa: f64,
}

impl ValueCritic for QuantileCritic {
    fn kind(&self) -> CriticKind {
        CriticKind::Quantile
    }

    fn estimate(&mut self, buffer: &RolloutBuffer, _cfg: &TrainConfig, _iteration: u64) -> Result<CriticEstimates> {
        let (states, next) = buffer.value_states();
        let out = self.net.forward_batch(states.view())?;
        let all: Vec<f64> = out.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect();
        check_finite(&all, "value")?;
        let (values, next_values) = split_values(&all, buffer.len(), &next);
        Ok(CriticEstimates {
            values,
            next_values,
            covs: None,
            targets: None,
        })
    }

    fn update(
        &mut self,
        buffer: &RolloutBuffer,
        targets: &[f64],
        batch: &[usize],
        cfg: &TrainConfig,
        _rng: &mut StreamRng,
    ) -> Result<CriticUpdate> {
        let x = rows(buffer, batch);
        let trace = self.net.forward_trace(x.view())?;
        let out = trace.output();
        let b = batch.len() as f64;
        let mut grad = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let q = out.row(r).to_vec();
            let (l, g) = quantile_huber_loss(&q, &self.taus, targets[i], self.kappa);
            loss += l;
            for (c, gc) in g.into_iter().enumerate() {
                grad[[r, c]] = gc / b;
            }
        }
        let loss = loss / b;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite quantile loss".into()));
        }
        self.net.backward(&trace, grad.view())?;
        let grad_norm = clip_and_step(&mut self.net, &mut self.adam, cfg.grad_norm)?;
        Ok(CriticUpdate {
            loss,
            grad_norm,
            clip_fraction: 0.0,
        })
    }

    fn checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        vec![CheckpointEntry::from_mlp("critic.quantile", &self.net)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoints() {
        assert_eq!(quantile_midpoints(2), vec![0.25, 0.75]);
        let taus = quantile_midpoints(51);
        assert_eq!(taus.len(), 51);
        assert!((taus[0] - 1.0 / 102.0).abs() < 1e-15);
        assert!((taus[25] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_loss_examples() {
        let taus = quantile_midpoints(5);
        let (loss, grad) = quantile_huber_loss(&[2.0; 5], &taus, 2.0, 1.0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));

        // median quantile, far from the target: slope one half on both sides
        let slope = |u: f64| {
            let (a, _) = quantile_huber_loss(&[0.0], &[0.5], u, 1.0);
            let (b, _) = quantile_huber_loss(&[0.0], &[0.5], u + 1.0, 1.0);
            b - a
        };
        assert!((slope(100.0) - 0.5).abs() < 1e-12);
        assert!((slope(-101.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_gradient_matches_finite_difference() {
        let taus = quantile_midpoints(4);
        let q = [-1.5, 0.2, 0.9, 3.0];
        let target = 0.5;
        let (_, grad) = quantile_huber_loss(&q, &taus, target, 1.0);
        let h = 1e-6;
        for i in 0..4 {
            let mut p = q;
            p[i] += h;
            let mut m = q;
            m[i] -= h;
            let fd = (quantile_huber_loss(&p, &taus, target, 1.0).0 - quantile_huber_loss(&m, &taus, target, 1.0).0)
                / (2.0 * h);
            assert!((grad[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_value(&[3.0; 5], EnsembleMode::Average), 3.0);
        assert_eq!(ensemble_value(&[3.0; 5], EnsembleMode::Minimum), 3.0);
        let outs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(ensemble_value(&outs, EnsembleMode::Average), 3.0);
        assert_eq!(ensemble_value(&outs, EnsembleMode::Minimum), 1.0);
    }

    proptest! {
        #[test]
        fn minimum_never_exceeds_average(outs in prop::collection::vec(-10.0..10.0f64, 1..8)) {
            prop_assert!(ensemble_value(&outs, EnsembleMode::Minimum) <= ensemble_value(&outs, EnsembleMode::Average) + 1e-12);
        }
    }

    #[test]
    fn every_kind_builds() {
        for kind in CriticKind::ALL {
            let cfg = TrainConfig {
                critic: kind,
                critic_hidden: vec![8],
                ..TrainConfig::desk()
            };
            let critic = build_critic(&cfg, 6).unwrap();
            assert_eq!(critic.kind(), kind);
            assert!(!critic.checkpoint_entries().is_empty());
        }
    }
}
