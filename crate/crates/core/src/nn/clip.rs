/// Euclidean norm over a set of gradient slices treated as one vector.
pub fn global_norm(parts: &[&[f64]]) -> f64 {
    parts.iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `gradients` so that its L2 norm does not exceed `max_norm`.
pub fn clip_global_norm(gradients: &[f64], max_norm: f64) -> Vec<f64> {
    let mut g = gradients.to_vec();
    clip_global_norm_in_place(&mut [&mut g], max_norm);
    g
}

/// In-place clipping of several slices by their joint norm. Returns the
/// norm measured before clipping.
pub fn clip_global_norm_in_place(parts: &mut [&mut [f64]], max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = parts.iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for p in parts.iter_mut() {
            p.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scales_down_long_vectors() {
        let g = clip_global_norm(&[3.0, 4.0], 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn leaves_short_vectors_alone() {
        assert_eq!(clip_global_norm(&[0.1, 0.0], 1.0), vec![0.1, 0.0]);
    }

    proptest! {
        #[test]
        fn bounded_and_idempotent(g in prop::collection::vec(-1e3f64..1e3, 1..40), max in 1e-3f64..10.0) {
            let once = clip_global_norm(&g, max);
            prop_assert!(global_norm(&[&once]) <= max + 1e-12);
            let twice = clip_global_norm(&once, max);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
