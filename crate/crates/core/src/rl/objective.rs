use ndarray::ArrayView2;

use super::policy::GaussianPolicy;
use crate::{Error, Result};

/// Minibatch summary of the weighted clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoTerms {
    /// Weighted surrogate mean plus the entropy bonus (to be maximized).
    pub objective: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub entropy: f64,
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)` and its derivative
/// with respect to `ratio`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Evaluates the weighted clipped objective on a minibatch and accumulates
/// the gradient of its negation into `policy`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_ppo_objective(
    policy: &mut GaussianPolicy,
    obs: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    weights: &[f64],
    eps: f64,
    entropy_coef: f64,
) -> Result<PpoTerms> {
    let b = obs.nrows();
    for (ctx, len) in [
        ("old log-probs", old_log_probs.len()),
        ("advantages", advantages.len()),
        ("weights", weights.len()),
    ] {
        if len != b {
            return Err(Error::shape(ctx, b, len));
        }
    }
    if b == 0 {
        return Err(Error::Config("empty policy minibatch".into()));
    }
    let eval = policy.evaluate(obs, actions)?;
    let inv_b = 1.0 / b as f64;
    let mut objective = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let mut dlogp = vec![0.0; b];
    for k in 0..b {
        let log_ratio = eval.log_probs[k] - old_log_probs[k];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() || !advantages[k].is_finite() || !weights[k].is_finite() {
            return Err(Error::Numeric(format!(
                "policy ratio {ratio} at minibatch row {k} (log-ratio {log_ratio}, advantage {}, weight {})",
                advantages[k], weights[k]
            )));
        }
        let (term, dterm) = clipped_surrogate(ratio, advantages[k], eps);
        objective += weights[k] * term;
        dlogp[k] = -weights[k] * dterm * ratio * inv_b;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += -log_ratio;
    }
    objective *= inv_b;
    objective += entropy_coef * eval.entropy;
    policy.backward(&eval, actions, &dlogp, -entropy_coef)?;
    Ok(PpoTerms {
        objective,
        clip_fraction: clipped as f64 * inv_b,
        approx_kl: kl * inv_b,
        entropy: eval.entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_surrogate(1.0, 1.0, 0.2).0, 1.0);
        assert!((clipped_surrogate(1.5, 1.0, 0.2).0 - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2).0 + 0.8).abs() < 1e-12);
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2).1, 0.0);
        assert_eq!(clipped_surrogate(1.5, -1.0, 0.2).1, -1.0);
    }

    proptest! {
        #[test]
        fn surrogate_is_pessimistic(ratio in 0.0..3.0f64, adv in -5.0..5.0f64, w in 0.0..3.0f64) {
            let term = w * clipped_surrogate(ratio, adv, 0.2).0;
            prop_assert!(term <= w * ratio * adv + 1e-12);
        }
    }

    fn setup() -> (GaussianPolicy, Array2<f64>, Array2<f64>, Vec<f64>) {
        let policy = GaussianPolicy::seeded(3, 2, &[8, 8], -0.3, &mut stream(9, &[])).unwrap();
        let obs = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let mut rngs: Vec<_> = (0..6).map(|k| stream(10, &[k])).collect();
        let (actions, lp) = policy.sample(obs.view(), &mut rngs).unwrap();
        (policy, obs, actions, lp)
    }

    #[test]
    fn unchanged_policy_gives_weighted_mean_advantage() {
        let (mut policy, obs, actions, lp) = setup();
        let adv = [1.0, -0.5, 2.0, 0.0, 0.3, -1.0];
        let w = [1.0, 2.0, 0.5, 1.0, 1.0, 0.5];
        let t = weighted_ppo_objective(&mut policy, obs.view(), actions.view(), &lp, &adv, &w, 0.2, 0.0).unwrap();
        let expect: f64 = adv.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / 6.0;
        assert!((t.objective - expect).abs() < 1e-12);
        assert_eq!(t.clip_fraction, 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (policy, obs, actions, lp) = setup();
        let mut shifted = lp.clone();
        shifted
            .iter_mut()
            .enumerate()
            .for_each(|(k, l)| *l += 0.05 * k as f64 - 0.1);
        let adv = [1.0, -0.5, 2.0, 0.7, 0.3, -1.0];
        let w = [1.0, 2.0, 0.5, 1.0, 1.0, 0.5];
        let objective = |p: &GaussianPolicy| {
            let mut p = p.clone();
            weighted_ppo_objective(&mut p, obs.view(), actions.view(), &shifted, &adv, &w, 0.2, 0.01)
                .unwrap()
                .objective
        };
        let mut analytic = policy.clone();
        weighted_ppo_objective(&mut analytic, obs.view(), actions.view(), &shifted, &adv, &w, 0.2, 0.01).unwrap();
        let h = 1e-6;
        for idx in [0, 5, 17, 40] {
            let mut plus = policy.clone();
            plus.mean_net.params_mut()[idx] += h;
            let mut minus = policy.clone();
            minus.mean_net.params_mut()[idx] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((-analytic.mean_net.grads()[idx] - fd).abs() < 1e-6, "param {idx}");
        }
        let mut plus = policy.clone();
        plus.log_std[1] += h;
        let mut minus = policy.clone();
        minus.log_std[1] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        assert!((-analytic.log_std_grad()[1] - fd).abs() < 1e-6);
    }

    #[test]
    fn non_finite_ratio_is_numeric_error() {
        let (mut policy, obs, actions, _) = setup();
        let old = vec![-1e6; 6];
        let err = weighted_ppo_objective(
            &mut policy,
            obs.view(),
            actions.view(),
            &old,
            &[1.0; 6],
            &[1.0; 6],
            0.2,
            0.0,
        )
        .unwrap_err();
        assert!(err.is_numeric());
    }
}
