use std::io::Write;

use crate::{Error, Result};

/// Guard added to `|mu|` in the coefficient of variation.
pub const COV_EPS: f64 = 1e-8;

/// Generated returns for one state and the statistics derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSampleSet {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divisor n).
    pub std: f64,
    pub cov: f64,
    /// Mean of the `n - m` smallest samples.
    pub truncated_value: f64,
    pub truncation: usize,
}

impl ValueSampleSet {
    pub fn from_samples(samples: Vec<f64>, truncation: usize) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Config("a sample set needs at least one sample".into()));
        }
        if truncation >= n {
            return Err(Error::Config(format!(
                "truncation {truncation} must be smaller than the sample count {n}"
            )));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        let cov = std / (mean.abs() + COV_EPS);

        let mut sorted = samples.clone();
        // Stable, so equal values keep their sample order.
        sorted.sort_by(f64::total_cmp);
        let kept = n - truncation;
        let truncated_value = sorted[..kept].iter().sum::<f64>() / kept as f64;

        Ok(Self {
            samples,
            mean,
            std,
            cov,
            truncated_value,
            truncation,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// State-level weight `exp(-alpha * kappa)`.
#[inline]
pub fn cov_weight(cov: f64, alpha: f64) -> f64 {
    debug_assert!(cov >= 0.0 && alpha >= 0.0);
    (-alpha * cov).exp()
}

/// Rescales positive weights so they sum to their count.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::Domain("no weights to normalize".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::Domain(format!("weights must be positive and finite, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    let n = weights.len() as f64;
    Ok(weights.iter().map(|w| w / total * n).collect())
}

/// Debug export: one `state_id,i,z_i` row per generated sample.
pub fn write_samples_csv<W: Write>(out: &mut W, sets: &[ValueSampleSet]) -> Result<()> {
    writeln!(out, "state_id,i,z_i")?;
    for (id, set) in sets.iter().enumerate() {
        for (i, z) in set.samples.iter().enumerate() {
            writeln!(out, "{id},{i},{z}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples() {
        let s = ValueSampleSet::from_samples(vec![2.0; 10], 1).unwrap();
        assert_eq!((s.mean, s.std, s.cov, s.truncated_value), (2.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn sort_and_drop() {
        let s = ValueSampleSet::from_samples(vec![3.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(s.truncated_value, 1.5);
    }

    #[test]
    fn two_point_statistics() {
        let s = ValueSampleSet::from_samples(vec![1.0, 3.0], 0).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(s.cov, 1.0 / (2.0 + 1e-8));
        assert!((s.cov - 0.5).abs() < 1e-8);
    }

    #[test]
    fn truncation_must_leave_samples() {
        assert!(matches!(
            ValueSampleSet::from_samples(vec![1.0, 2.0], 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(cov_weight(0.0, 0.1), 1.0);
        assert!((cov_weight(0.5, 0.1) - 0.951_229_424_500_714).abs() < 1e-12);
        assert!(cov_weight(0.3, 0.1) > cov_weight(0.4, 0.1));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_weights(&[1.0; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.5, 1.5]);
        assert!(normalize_weights(&[1.0, 0.0]).is_err());
        assert!(normalize_weights(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn csv_export() {
        let sets = vec![ValueSampleSet::from_samples(vec![1.0, 2.0], 0).unwrap()];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &sets).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "state_id,i,z_i\n0,0,1\n0,1,2\n");
    }

    proptest! {
        #[test]
        fn truncation_is_pessimistic(samples in prop::collection::vec(-100f64..100.0, 2..30), m in 0usize..29) {
            prop_assume!(m < samples.len());
            let s = ValueSampleSet::from_samples(samples, m).unwrap();
            prop_assert!(s.truncated_value <= s.mean + 1e-9);
            prop_assert_eq!(s.cov, s.std / (s.mean.abs() + COV_EPS));
        }

        #[test]
        fn normalized_mass_and_order(w in prop::collection::vec(1e-6f64..10.0, 1..200)) {
            let out = normalize_weights(&w).unwrap();
            let total: f64 = out.iter().sum();
            prop_assert!((total - w.len() as f64).abs() < 1e-9);
            for i in 1..w.len() {
                if w[i - 1] < w[i] { prop_assert!(out[i - 1] <= out[i]); }
            }
        }
    }
}
