use flowcritic::envs::EnvKind;
use flowcritic::nn::{clip_global_norm, Activation, Mlp};
use flowcritic::rng::stream;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

const STEP: f64 = 1e-5;
const MAX_RELATIVE_ERROR: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
const GRADIENT_FLOOR: f64 = 1e-6;
const SEEDS: u64 = 100;
const COORDS_PER_SEED: usize = 6;
/// Coordinates whose perturbation flips a ReLU are not differentiable there.
const MAX_SKIPPED_SHARE: f64 = 0.02;

struct Shape {
    name: &'static str,
    input: usize,
    hidden: Vec<usize>,
    output: usize,
    activation: Activation,
}

/// Every network layout the crate builds: actors, point and ensemble
/// critics, quantile heads and flow velocity fields, at full, desk and toy
/// sizes.
fn shapes() -> Vec<Shape> {
    let mut out = Vec::new();
    for env in [EnvKind::PointMass, EnvKind::Pendulum, EnvKind::ToySingleStep] {
        let venv = flowcritic::envs::VecEnv::new(env, 1, 0);
        let (obs, act) = (venv.obs_dim(), venv.act_dim());
        for hidden in [vec![256, 256], vec![64, 64]] {
            out.push(Shape {
                name: "actor",
                input: obs,
                hidden,
                output: act,
                activation: Activation::Tanh,
            });
        }
        for hidden in [vec![512; 4], vec![64, 64]] {
            out.push(Shape {
                name: "point",
                input: obs,
                hidden: hidden.clone(),
                output: 1,
                activation: Activation::Relu,
            });
            out.push(Shape {
                name: "quantile",
                input: obs,
                hidden: hidden.clone(),
                output: 51,
                activation: Activation::Relu,
            });
            out.push(Shape {
                name: "velocity",
                input: obs + 2,
                hidden,
                output: 1,
                activation: Activation::Relu,
            });
        }
    }
    out.push(Shape {
        name: "toy point",
        input: 2,
        hidden: vec![128, 128],
        output: 1,
        activation: Activation::Relu,
    });
    out.push(Shape {
        name: "toy velocity",
        input: 4,
        hidden: vec![128, 128],
        output: 1,
        activation: Activation::Relu,
    });
    out.push(Shape {
        name: "bimodal velocity",
        input: 3,
        hidden: vec![64, 64],
        output: 1,
        activation: Activation::Relu,
    });
    let mut seen = Vec::new();
    out.retain(|s| {
        let key = (s.input, s.hidden.clone(), s.output, s.activation);
        let fresh = !seen.contains(&key);
        seen.push(key);
        fresh
    });
    out
}

/// `sum(weights * net(x))`, a scalar loss with a known output gradient, and
/// the sign pattern of every hidden unit.
fn loss(net: &Mlp, x: &Array2<f64>, weights: &Array2<f64>) -> (f64, Vec<bool>) {
    let trace = net.forward_trace(x.view()).unwrap();
    let hidden = net.layer_sizes().len() - 2;
    let pattern = (1..=hidden)
        .flat_map(|l| trace.layer(l).iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect();
    ((trace.output() * weights).sum(), pattern)
}

/// Worst relative error over the checked coordinates, and how many were
/// skipped for straddling a kink.
fn worst_error(shape: &Shape, seed: u64) -> (f64, usize) {
    let mut rng = stream(seed, &[shape.input as u64, shape.output as u64, shape.hidden[0] as u64]);
    let mut net = Mlp::seeded(shape.input, &shape.hidden, shape.output, shape.activation, &mut rng).unwrap();
    let x = Array2::from_shape_fn((2, shape.input), |_| rng.random_range(-2.0..2.0));
    let weights = Array2::from_shape_fn((2, shape.output), |_| rng.random_range(-1.0..1.0));

    let trace = net.forward_trace(x.view()).unwrap();
    net.backward(&trace, weights.view()).unwrap();
    let analytic = net.grads().to_vec();

    let len = analytic.len();
    let mut coords: Vec<usize> = (0..COORDS_PER_SEED).map(|_| rng.random_range(0..len)).collect();
    coords.extend([0, len - 1]);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for i in coords {
        let original = net.params()[i];
        net.params_mut()[i] = original + STEP;
        let (up, up_pattern) = loss(&net, &x, &weights);
        net.params_mut()[i] = original - STEP;
        let (down, down_pattern) = loss(&net, &x, &weights);
        net.params_mut()[i] = original;
        if shape.activation == Activation::Relu && up_pattern != down_pattern {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        let scale = analytic[i].abs().max(numeric.abs()).max(GRADIENT_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    (worst, skipped)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let (mut checked, mut skipped) = (0, 0);
    for shape in shapes() {
        let mut worst: f64 = 0.0;
        for seed in 0..SEEDS {
            let (err, skip) = worst_error(&shape, seed);
            worst = worst.max(err);
            skipped += skip;
            checked += COORDS_PER_SEED + 2;
        }
        assert!(
            worst < MAX_RELATIVE_ERROR,
            "{} {}->{:?}->{}: relative error {worst:e}",
            shape.name,
            shape.input,
            shape.hidden,
            shape.output
        );
    }
    assert!(
        (skipped as f64) < MAX_SKIPPED_SHARE * checked as f64,
        "{skipped} of {checked} coordinates straddled a kink"
    );
}

proptest! {
    #[test]
    fn norm_clipping_is_idempotent(g in prop::collection::vec(-100.0..100.0f64, 1..40), max in 0.01..10.0f64) {
        let once = clip_global_norm(&g, max);
        let twice = clip_global_norm(&once, max);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
