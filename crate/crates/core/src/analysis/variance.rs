use rand::Rng;

use crate::rng::standard_normal;
use crate::{Error, Result};

/// Fewer Monte Carlo trials than this cannot resolve the variance gap.
pub const MIN_CONCLUSIVE_TRIALS: usize = 10_000;

fn check_covs(covs: &[f64]) -> Result<()> {
    if covs.len() < 2 {
        return Err(Error::Domain("need at least two CoV values".into()));
    }
    if covs.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::Domain("CoV values must be finite and non-negative".into()));
    }
    Ok(())
}

/// Slope at `alpha = 0` of the weighted-estimator variance,
/// `(2/N^3) (sum k^2 * sum k - N sum k^3)`.
///
/// Evaluated through the pairwise identity
/// `N sum k^3 - sum k^2 sum k = 1/2 sum_ij (k_i - k_j)^2 (k_i + k_j)`,
/// which is exactly zero for constant input and non-positive otherwise.
pub fn phi_derivative_at_zero(covs: &[f64]) -> Result<f64> {
    check_covs(covs)?;
    let n = covs.len() as f64;
    let mut pairs = 0.0;
    for (i, &a) in covs.iter().enumerate() {
        for &b in &covs[i + 1..] {
            pairs += (a - b) * (a - b) * (a + b);
        }
    }
    Ok(-2.0 * pairs / (n * n * n))
}

/// Variance of the plain mean of independent `N(0, k_i^2)` gradients.
pub fn unweighted_variance(covs: &[f64]) -> f64 {
    let n = covs.len() as f64;
    covs.iter().map(|k| k * k).sum::<f64>() / (n * n)
}

/// Variance of the same mean under normalized `exp(-alpha k)` weights.
pub fn weighted_variance(covs: &[f64], alpha: f64) -> f64 {
    let weights = shifted_weights(covs, alpha);
    let total: f64 = weights.iter().sum();
    weights.iter().zip(covs).map(|(w, k)| w * w * k * k).sum::<f64>() / (total * total)
}

// scaled by exp(alpha * min k); the factor cancels in every ratio
fn shifted_weights(covs: &[f64], alpha: f64) -> Vec<f64> {
    let min = covs.iter().copied().fold(f64::INFINITY, f64::min);
    covs.iter().map(|k| (-alpha * (k - min)).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Monte Carlo and closed-form variances of both estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCheck {
    pub trials: usize,
    pub mc_weighted: f64,
    pub mc_unweighted: f64,
    pub se_weighted: f64,
    pub se_unweighted: f64,
    pub closed_weighted: f64,
    pub closed_unweighted: f64,
}

impl VarianceCheck {
    /// Both Monte Carlo variances lie within `z` standard errors of their
    /// closed forms.
    pub fn agrees(&self, z: f64) -> bool {
        (self.mc_weighted - self.closed_weighted).abs() <= z * self.se_weighted
            && (self.mc_unweighted - self.closed_unweighted).abs() <= z * self.se_unweighted
    }

    pub fn reduced(&self) -> bool {
        self.closed_weighted < self.closed_unweighted
    }

    /// Pass when the weighted variance is lower and the simulation agrees
    /// within three standard errors; inconclusive with too few trials.
    pub fn verdict(&self) -> Verdict {
        if self.trials < MIN_CONCLUSIVE_TRIALS {
            Verdict::Inconclusive
        } else if self.reduced() && self.agrees(3.0) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Sample variance and its standard error `sqrt((m4 - s^4) / T)`.
fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / t;
    (var, ((m4 - var * var).max(0.0) / t).sqrt())
}

/// Simulates per-sample gradients `g_i ~ N(0, k_i^2)` and compares the
/// plain mean with the CoV-weighted mean over `trials` draws.
pub fn gradient_variance_check<R: Rng + ?Sized>(
    covs: &[f64],
    alpha: f64,
    trials: usize,
    rng: &mut R,
) -> Result<VarianceCheck> {
    check_covs(covs)?;
    if trials < 2 {
        return Err(Error::Domain("need at least two trials".into()));
    }
    let weights = shifted_weights(covs, alpha);
    let total: f64 = weights.iter().sum();
    let n = covs.len() as f64;
    let mut plain = Vec::with_capacity(trials);
    let mut weighted = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (mut a, mut b) = (0.0, 0.0);
        for (k, w) in covs.iter().zip(&weights) {
            let g = k * standard_normal(rng);
            a += g;
            b += w * g;
        }
        plain.push(a / n);
        weighted.push(b / total);
    }
    let (mc_unweighted, se_unweighted) = variance_with_se(&plain);
    let (mc_weighted, se_weighted) = variance_with_se(&weighted);
    Ok(VarianceCheck {
        trials,
        mc_weighted,
        mc_unweighted,
        se_weighted,
        se_unweighted,
        closed_weighted: weighted_variance(covs, alpha),
        closed_unweighted: unweighted_variance(covs),
    })
}
