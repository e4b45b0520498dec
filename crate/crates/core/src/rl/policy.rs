use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::nn::{Activation, Mlp, Trace};
use crate::rng::{standard_normal, StreamRng};
use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian policy: tanh MLP mean and a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
    log_std_grad: Vec<f64>,
}

/// Forward results kept for the policy gradient.
pub struct PolicyEval {
    trace: Trace,
    pub log_probs: Vec<f64>,
    /// Entropy of the action distribution (identical for every state).
    pub entropy: f64,
}

impl GaussianPolicy {
    pub fn seeded<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mean_net = Mlp::seeded(obs_dim, hidden, act_dim, Activation::Tanh, rng)?;
        Ok(Self {
            mean_net,
            log_std: vec![init_log_std; act_dim],
            log_std_grad: vec![0.0; act_dim],
        })
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.params().len() + self.log_std.len()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
    }

    fn log_prob_row(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for d in 0..self.act_dim() {
            let z = (action[d] - mean[d]) / self.log_std[d].exp();
            lp += -0.5 * z * z - self.log_std[d] - HALF_LN_2PI;
        }
        lp
    }

    /// Draws one action per observation row; row `k` uses `rngs[k]`.
    pub fn sample(&self, obs: ArrayView2<'_, f64>, rngs: &mut [StreamRng]) -> Result<(Array2<f64>, Vec<f64>)> {
        if rngs.len() != obs.nrows() {
            return Err(Error::shape("action streams", obs.nrows(), rngs.len()));
        }
        let mean = self.mean_net.forward_batch(obs)?;
        let mut actions = Array2::zeros(mean.raw_dim());
        let mut log_probs = Vec::with_capacity(obs.nrows());
        for (k, rng) in rngs.iter_mut().enumerate() {
            for d in 0..self.act_dim() {
                actions[[k, d]] = mean[[k, d]] + self.log_std[d].exp() * standard_normal(rng);
            }
            let lp = self.log_prob_row(
                mean.row(k).as_slice().expect("contiguous"),
                actions.row(k).as_slice().expect("contiguous"),
            );
            log_probs.push(lp);
        }
        Ok((actions, log_probs))
    }

    pub fn evaluate(&self, obs: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Result<PolicyEval> {
        if actions.dim() != (obs.nrows(), self.act_dim()) {
            return Err(Error::shape(
                "evaluated actions",
                obs.nrows() * self.act_dim(),
                actions.len(),
            ));
        }
        let trace = self.mean_net.forward_trace(obs)?;
        let mean = trace.output();
        let log_probs = (0..obs.nrows())
            .map(|k| {
                let a = actions.row(k).to_vec();
                self.log_prob_row(mean.row(k).as_slice().expect("contiguous"), &a)
            })
            .collect();
        Ok(PolicyEval {
            trace,
            log_probs,
            entropy: self.entropy(),
        })
    }

    /// Accumulates the gradient of `sum_k dlogp[k] * log_prob_k + dentropy * entropy`.
    pub fn backward(
        &mut self,
        eval: &PolicyEval,
        actions: ArrayView2<'_, f64>,
        dlogp: &[f64],
        dentropy: f64,
    ) -> Result<()> {
        let mean = eval.trace.output();
        if dlogp.len() != mean.nrows() {
            return Err(Error::shape("log-prob gradient", mean.nrows(), dlogp.len()));
        }
        let act_dim = self.act_dim();
        let mut grad_mean = Array2::zeros(mean.raw_dim());
        for k in 0..mean.nrows() {
            for d in 0..act_dim {
                let std = self.log_std[d].exp();
                let diff = actions[[k, d]] - mean[[k, d]];
                grad_mean[[k, d]] = dlogp[k] * diff / (std * std);
                let z = diff / std;
                self.log_std_grad[d] += dlogp[k] * (z * z - 1.0);
            }
        }
        for g in &mut self.log_std_grad {
            *g += dentropy;
        }
        self.mean_net.backward(&eval.trace, grad_mean.view())
    }

    /// (params, grads) slices for the optimizer: mean network then log-std.
    pub fn parts_mut(&mut self) -> [(&mut [f64], &mut [f64]); 2] {
        let (p, g) = self.mean_net.params_and_grads();
        [(p, g), (&mut self.log_std, &mut self.log_std_grad)]
    }

    pub fn zero_grad(&mut self) {
        self.mean_net.zero_grad();
        self.log_std_grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn log_std_grad(&self) -> &[f64] {
        &self.log_std_grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn log_prob_of_mean_action() {
        let mut rng = stream(0, &[]);
        let policy = GaussianPolicy::seeded(3, 2, &[8], 0.0, &mut rng).unwrap();
        let obs = Array2::from_elem((1, 3), 0.2);
        let mean = policy.mean_net.forward_batch(obs.view()).unwrap();
        let eval = policy.evaluate(obs.view(), mean.view()).unwrap();
        assert!((eval.log_probs[0] + 2.0 * HALF_LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn sampled_log_probs_match_evaluation() {
        let mut rng = stream(1, &[]);
        let policy = GaussianPolicy::seeded(2, 2, &[8, 8], -0.5, &mut rng).unwrap();
        let obs = Array2::from_shape_fn((4, 2), |(i, j)| i as f64 * 0.3 - j as f64 * 0.1);
        let mut rngs: Vec<_> = (0..4).map(|k| stream(2, &[k])).collect();
        let (actions, lp) = policy.sample(obs.view(), &mut rngs).unwrap();
        let eval = policy.evaluate(obs.view(), actions.view()).unwrap();
        for (a, b) in lp.iter().zip(&eval.log_probs) {
            assert!((a - b).abs() < 1e-12 && a.is_finite());
        }
    }

    #[test]
    fn log_std_gradient_matches_finite_difference() {
        let mut rng = stream(3, &[]);
        let mut policy = GaussianPolicy::seeded(2, 1, &[4], 0.3, &mut rng).unwrap();
        let obs = Array2::from_elem((1, 2), 0.5);
        let actions = Array2::from_elem((1, 1), 1.7);
        let eval = policy.evaluate(obs.view(), actions.view()).unwrap();
        policy.backward(&eval, actions.view(), &[1.0], 0.0).unwrap();
        let analytic = policy.log_std_grad()[0];
        let h = 1e-6;
        let lp = |p: &mut GaussianPolicy, ls: f64| {
            p.log_std[0] = ls;
            p.evaluate(obs.view(), actions.view()).unwrap().log_probs[0]
        };
        let fd = (lp(&mut policy, 0.3 + h) - lp(&mut policy, 0.3 - h)) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-6);
    }
}
