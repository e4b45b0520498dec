use ndarray::{Array2, ArrayView2};

use crate::nn::Mlp;
use crate::{Error, Result};

/// A time-dependent velocity field conditioned on a state.
pub trait VelocityField {
    /// Velocity at each path point `points[i]`, time `t` and state row `i`.
    fn velocity(&self, points: &[f64], t: f64, states: ArrayView2<'_, f64>) -> Result<Vec<f64>>;
}

/// Builds the network input rows `[o, t, s...]`.
pub(crate) fn velocity_input(points: &[f64], times: &[f64], states: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = states.ncols();
    let mut x = Array2::zeros((points.len(), d + 2));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row[0] = points[i];
        row[1] = times[i];
        for j in 0..d {
            row[j + 2] = states[[i, j]];
        }
    }
    x
}

impl VelocityField for Mlp {
    fn velocity(&self, points: &[f64], t: f64, states: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if points.len() != states.nrows() {
            return Err(Error::shape("velocity batch", states.nrows(), points.len()));
        }
        let times = vec![t; points.len()];
        let out = self.forward_batch(velocity_input(points, &times, states).view())?;
        Ok(out.into_raw_vec_and_offset().0)
    }
}

/// Field that returns the same velocity everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl VelocityField for ConstantField {
    fn velocity(&self, points: &[f64], _t: f64, _states: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(vec![self.0; points.len()])
    }
}

/// Field given pointwise by a closure `f(o, t, s)`.
pub struct FnField<F>(pub F);

impl<F> VelocityField for FnField<F>
where
    F: Fn(f64, f64, &[f64]) -> f64,
{
    fn velocity(&self, points: &[f64], t: f64, states: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(points
            .iter()
            .zip(states.rows())
            .map(|(&o, s)| (self.0)(o, t, &s.to_vec()))
            .collect())
    }
}

/// Integrates `do/dt = f(o, t, s)` from `o(0) = prior` to `t = 1` with
/// `steps` forward Euler steps.
pub fn euler_sample<F: VelocityField + ?Sized>(field: &F, state: &[f64], prior: f64, steps: usize) -> Result<f64> {
    let states = ArrayView2::from_shape((1, state.len()), state).expect("row vector");
    Ok(euler_sample_batch(field, states, &[prior], steps)?[0])
}

/// Batched [`euler_sample`]: row `i` of `states` is paired with `priors[i]`.
pub fn euler_sample_batch<F: VelocityField + ?Sized>(
    field: &F,
    states: ArrayView2<'_, f64>,
    priors: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config("Euler sampler needs at least one step".into()));
    }
    if priors.len() != states.nrows() {
        return Err(Error::shape("Euler batch", states.nrows(), priors.len()));
    }
    if priors.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("non-finite prior draw".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut o = priors.to_vec();
    for k in 0..steps {
        let t = k as f64 * dt;
        let v = field.velocity(&o, t, states)?;
        for (oi, vi) in o.iter_mut().zip(&v) {
            *oi += dt * vi;
        }
        if o.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite flow state at Euler step {k}")));
        }
    }
    Ok(o)
}
