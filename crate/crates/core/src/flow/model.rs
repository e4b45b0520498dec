use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::field::{euler_sample, euler_sample_batch, velocity_input, VelocityField};
use super::path::{clipped_cfm_term, conditional_velocity, interpolate};
use super::samples::ValueSampleSet;
use crate::nn::{Activation, Mlp};
use crate::rng::standard_normal;
use crate::{Error, Result};

/// Velocity network, its frozen target copy and sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCriticModel {
    pub velocity_net: Mlp,
    target_net: Option<Mlp>,
    pub euler_steps: usize,
    pub clip_delta: f64,
}

impl FlowCriticModel {
    /// `velocity_net` must map `[o, t, s...]` to a single velocity.
    pub fn new(velocity_net: Mlp, euler_steps: usize, clip_delta: f64) -> Result<Self> {
        if velocity_net.output_dim() != 1 || velocity_net.input_dim() < 2 {
            return Err(Error::Config(
                "velocity network must map (o, t, s) to one output".into(),
            ));
        }
        if euler_steps == 0 {
            return Err(Error::Config("euler_steps must be positive".into()));
        }
        if !(clip_delta > 0.0) {
            return Err(Error::Config("velocity clip must be positive".into()));
        }
        Ok(Self {
            velocity_net,
            target_net: None,
            euler_steps,
            clip_delta,
        })
    }

    pub fn seeded<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        euler_steps: usize,
        clip_delta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let net = Mlp::seeded(state_dim + 2, hidden, 1, Activation::Relu, rng)?;
        Self::new(net, euler_steps, clip_delta)
    }

    pub fn state_dim(&self) -> usize {
        self.velocity_net.input_dim() - 2
    }

    pub fn delta_t(&self) -> f64 {
        1.0 / self.euler_steps as f64
    }

    /// Freezes a copy of the current velocity network.
    pub fn snapshot_target(&mut self) {
        let mut frozen = self.velocity_net.clone();
        frozen.zero_grad();
        self.target_net = Some(frozen);
    }

    pub fn target_net(&self) -> Option<&Mlp> {
        self.target_net.as_ref()
    }

    /// The sampling map from a prior draw to a return sample.
    pub fn sample(&self, state: &[f64], prior: f64) -> Result<f64> {
        euler_sample(&self.velocity_net, state, prior, self.euler_steps)
    }

    pub fn sample_batch(&self, states: ArrayView2<'_, f64>, priors: &[f64]) -> Result<Vec<f64>> {
        euler_sample_batch(&self.velocity_net, states, priors, self.euler_steps)
    }

    /// Mean clipped flow-matching loss over `batch`. Gradients of the mean
    /// are accumulated into the velocity network only.
    pub fn clipped_cfm_loss(&mut self, batch: &[FlowTrainingSample]) -> Result<CfmLoss> {
        let target = self
            .target_net
            .as_ref()
            .ok_or_else(|| Error::State("clipped loss needs a target snapshot".into()))?;
        if batch.is_empty() {
            return Ok(CfmLoss::default());
        }
        let d = self.state_dim();
        let mut states = Array2::zeros((batch.len(), d));
        for (i, sample) in batch.iter().enumerate() {
            if sample.state.len() != d {
                return Err(Error::shape("flow training state", d, sample.state.len()));
            }
            for j in 0..d {
                states[[i, j]] = sample.state[j];
            }
        }
        let points: Vec<f64> = batch.iter().map(|b| b.path_point).collect();
        let times: Vec<f64> = batch.iter().map(|b| b.time).collect();
        let x = velocity_input(&points, &times, states.view());

        let trace = self.velocity_net.forward_trace(x.view())?;
        let v_old = target.forward_batch(x.view())?;
        let v_new = trace.output();

        let scale = 1.0 / batch.len() as f64;
        let mut grad = Array2::zeros((batch.len(), 1));
        let mut loss = 0.0;
        let mut clipped = 0usize;
        for (i, sample) in batch.iter().enumerate() {
            let (vn, vo) = (v_new[[i, 0]], v_old[[i, 0]]);
            let (l, g) = clipped_cfm_term(vn, vo, sample.velocity, self.clip_delta);
            if (vn - vo).abs() > self.clip_delta {
                clipped += 1;
            }
            loss += l;
            grad[[i, 0]] = g * scale;
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite flow-matching loss".into()));
        }
        self.velocity_net.backward(&trace, grad.view())?;
        Ok(CfmLoss {
            loss,
            clip_fraction: clipped as f64 / batch.len() as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CfmLoss {
    pub loss: f64,
    /// Share of samples whose new prediction left the clip band.
    pub clip_fraction: f64,
}

/// One (state, prior draw, target, path time) tuple for flow training.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrainingSample {
    pub state: Vec<f64>,
    pub prior: f64,
    pub target: f64,
    pub time: f64,
    pub path_point: f64,
    pub velocity: f64,
}

impl FlowTrainingSample {
    pub fn new(state: Vec<f64>, prior: f64, target: f64, time: f64) -> Result<Self> {
        let path_point = interpolate(prior, target, time)?;
        Ok(Self {
            state,
            prior,
            target,
            time,
            path_point,
            velocity: conditional_velocity(prior, target),
        })
    }

    /// Fresh prior draw and uniform path time.
    pub fn draw<R: Rng + ?Sized>(state: Vec<f64>, target: f64, rng: &mut R) -> Result<Self> {
        let prior = standard_normal(rng);
        let time = rng.random::<f64>();
        Self::new(state, prior, target, time)
    }
}

/// `n` generated returns for one state, truncated by `m`.
pub fn sample_value_set<F: VelocityField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    state: &[f64],
    n: usize,
    m: usize,
    euler_steps: usize,
    rng: &mut R,
) -> Result<ValueSampleSet> {
    if n < 2 {
        return Err(Error::Config("need at least two value samples".into()));
    }
    if m >= n {
        return Err(Error::Config(format!("truncation {m} must be below sample count {n}")));
    }
    let priors: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    let states = Array2::from_shape_fn((n, state.len()), |(_, j)| state[j]);
    let samples = euler_sample_batch(field, states.view(), &priors, euler_steps)?;
    ValueSampleSet::from_samples(samples, m)
}

/// Per-state output of [`sample_states`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateSamples {
    /// The single prior draw paired with this state for return targets.
    pub pairing_prior: f64,
    /// Its flow image.
    pub pairing_sample: f64,
    pub set: ValueSampleSet,
}

/// Samples every row of `states`. State `j` takes its randomness from
/// `rng_for(j)` only: first the pairing draw, then the `n` value draws.
pub fn sample_states<F, R, G>(
    field: &F,
    states: ArrayView2<'_, f64>,
    n: usize,
    m: usize,
    euler_steps: usize,
    rng_for: G,
) -> Result<Vec<StateSamples>>
where
    F: VelocityField + ?Sized,
    R: Rng,
    G: Fn(usize) -> R,
{
    if n < 2 {
        return Err(Error::Config("need at least two value samples".into()));
    }
    if m >= n {
        return Err(Error::Config(format!("truncation {m} must be below sample count {n}")));
    }
    const CHUNK: usize = 256;
    let per = n + 1;
    let d = states.ncols();
    let mut out = Vec::with_capacity(states.nrows());
    for start in (0..states.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(states.nrows());
        let rows = (end - start) * per;
        let mut priors = Vec::with_capacity(rows);
        for j in start..end {
            let mut rng = rng_for(j);
            priors.extend((0..per).map(|_| standard_normal(&mut rng)));
        }
        let expanded = Array2::from_shape_fn((rows, d), |(r, c)| states[[start + r / per, c]]);
        let z = euler_sample_batch(field, expanded.view(), &priors, euler_steps)?;
        for (k, j) in (start..end).enumerate() {
            let base = k * per;
            out.push(StateSamples {
                pairing_prior: priors[base],
                pairing_sample: z[base],
                set: ValueSampleSet::from_samples(z[base + 1..base + per].to_vec(), m)?,
            });
            debug_assert_eq!(j, start + k);
        }
    }
    Ok(out)
}
