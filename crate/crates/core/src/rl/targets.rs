//! Temporal-difference quantities over a flattened rollout. Every function
//! takes an `ends` mask marking where a backward recursion restarts.

use crate::{Error, Result};

/// One-sample distributional TD term `r + gamma * z_next - z_cur`; the
/// successor sample is dropped at terminal transitions.
pub fn dist_td_sample(reward: f64, gamma: f64, z_next: f64, z_cur: f64, terminal: bool) -> f64 {
    let next = if terminal { 0.0 } else { z_next };
    reward + gamma * next - z_cur
}

/// `out[i] = terms[i] + decay * out[i + 1]`, restarting after every end.
pub fn backward_discounted_sum(terms: &[f64], decay: f64, ends: &[bool]) -> Result<Vec<f64>> {
    if terms.len() != ends.len() {
        return Err(Error::shape("segment ends", terms.len(), ends.len()));
    }
    let mut out = vec![0.0; terms.len()];
    let mut acc = 0.0;
    for i in (0..terms.len()).rev() {
        if ends[i] {
            acc = 0.0;
        }
        acc = terms[i] + decay * acc;
        out[i] = acc;
    }
    Ok(out)
}

/// Sample-level return targets: the `gamma * lambda` discounted sum of TD
/// samples plus the current sample.
pub fn dist_return_targets(td_samples: &[f64], z_cur: &[f64], gamma_lambda: f64, ends: &[bool]) -> Result<Vec<f64>> {
    if z_cur.len() != td_samples.len() {
        return Err(Error::shape("current samples", td_samples.len(), z_cur.len()));
    }
    let mut out = backward_discounted_sum(td_samples, gamma_lambda, ends)?;
    for (o, z) in out.iter_mut().zip(z_cur) {
        *o += z;
    }
    Ok(out)
}

/// Generalized advantage estimates. `next_values` must already be zero (or
/// ignored via `terminated`) for terminal transitions.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    for (ctx, len) in [
        ("values", values.len()),
        ("next values", next_values.len()),
        ("terminal flags", terminated.len()),
    ] {
        if len != n {
            return Err(Error::shape(ctx, n, len));
        }
    }
    let deltas: Vec<f64> = (0..n)
        .map(|i| {
            let next = if terminated[i] { 0.0 } else { next_values[i] };
            rewards[i] + gamma * next - values[i]
        })
        .collect();
    backward_discounted_sum(&deltas, gamma * lambda, ends)
}

/// `advantage + value`, the regression target for point critics.
pub fn empirical_return_targets(advantages: &[f64], values: &[f64]) -> Vec<f64> {
    advantages.iter().zip(values).map(|(a, v)| a + v).collect()
}

/// Standardizes in place with the population standard deviation.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    if advantages.is_empty() {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}
