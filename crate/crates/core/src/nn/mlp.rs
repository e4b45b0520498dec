use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Layer outputs recorded during a forward pass, consumed by [`Mlp::backward`].
///
/// `layers[0]` is the batch input and `layers[L]` the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    layers: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("trace always holds the input")
    }

    pub fn batch_size(&self) -> usize {
        self.layers[0].nrows()
    }

    /// Output of layer `l` after its activation; `0` is the input.
    pub fn layer(&self, l: usize) -> &Array2<f64> {
        &self.layers[l]
    }
}

/// A fully connected network with a linear output layer.
///
/// Parameters live in one flat vector: for each layer, the `out x in`
/// row-major weight matrix followed by the `out` biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    grads: Vec<f64>,
    recorded: Option<Trace>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes && self.activations == other.activations && self.params == other.params
    }
}

impl Mlp {
    /// Zero-initialized network. `activations` has one entry per hidden layer.
    pub fn new(layer_sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if activations.len() != layer_sizes.len() - 2 {
            return Err(Error::shape(
                "activations per hidden layer",
                layer_sizes.len() - 2,
                activations.len(),
            ));
        }
        let n = Self::param_count(layer_sizes);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n],
            grads: vec![0.0; n],
            recorded: None,
        })
    }

    /// Network with the same activation on every hidden layer, initialized
    /// uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn seeded<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut net = Self::new(&sizes, &vec![activation; hidden.len()])?;
        net.init_uniform(rng);
        Ok(net)
    }

    pub fn param_count(layer_sizes: &[usize]) -> usize {
        layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let len = (fan_in + 1) * fan_out;
            for p in &mut self.params[offset..offset + len] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += len;
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("parameter vector", self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Parameters and gradient accumulator, borrowed together for optimizers.
    pub fn params_and_grads(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.params, &mut self.grads)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    fn layer_offsets(&self, layer: usize) -> (usize, usize, usize) {
        let start: usize = self.layer_sizes[..=layer].windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        (start, self.layer_sizes[layer], self.layer_sizes[layer + 1])
    }

    fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (start, fan_in, fan_out) = self.layer_offsets(layer);
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[start..start + fan_in * fan_out])
            .expect("layer slice matches its shape");
        let b = ArrayView1::from(&self.params[start + fan_in * fan_out..start + (fan_in + 1) * fan_out]);
        (w, b)
    }

    fn layer_grads(&mut self, layer: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let (start, fan_in, fan_out) = self.layer_offsets(layer);
        let (w, b) = self.grads[start..start + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
        (
            ArrayViewMut2::from_shape((fan_out, fan_in), w).expect("layer slice matches its shape"),
            ArrayViewMut1::from(b),
        )
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation_of(&self, layer: usize) -> Activation {
        self.activations.get(layer).copied().unwrap_or(Activation::Identity)
    }

    fn run(&self, x: ArrayView2<'_, f64>, keep: bool) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), x.ncols()));
        }
        let mut kept = Vec::new();
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w.t());
            z += &b;
            let act = self.activation_of(l);
            if act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            if keep {
                kept.push(std::mem::replace(&mut h, z));
            } else {
                h = z;
            }
        }
        Ok((h, kept))
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch, one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.run(x, false)?.0)
    }

    /// Forward pass that keeps the intermediate layers for a later backward pass.
    pub fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Result<Trace> {
        let (out, mut layers) = self.run(x, true)?;
        layers.push(out);
        Ok(Trace { layers })
    }

    /// Accumulates d(loss)/d(params) given d(loss)/d(output) for every row of
    /// the traced batch. Repeated calls sum into the accumulator.
    pub fn backward(&mut self, trace: &Trace, grad_output: ArrayView2<'_, f64>) -> Result<()> {
        if trace.layers.len() != self.num_layers() + 1 || trace.layers[0].ncols() != self.input_dim() {
            return Err(Error::State("trace was recorded by a different network".into()));
        }
        let out = trace.output();
        if grad_output.dim() != out.dim() {
            return Err(Error::shape("output gradient", out.len(), grad_output.len()));
        }
        let mut g = grad_output.to_owned();
        for l in (0..self.num_layers()).rev() {
            let act = self.activation_of(l);
            if act != Activation::Identity {
                g.zip_mut_with(&trace.layers[l + 1], |gi, &y| *gi *= act.derivative_from_output(y));
            }
            let input = &trace.layers[l];
            {
                let (mut dw, mut db) = self.layer_grads(l);
                general_mat_mul(1.0, &g.t(), input, 1.0, &mut dw);
                db += &g.sum_axis(Axis(0));
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                g = g.dot(&w);
            }
        }
        Ok(())
    }

    /// Stateful forward pass: the trace is stored for [`Mlp::backward_recorded`].
    pub fn forward_recorded(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        let trace = self.forward_trace(x)?;
        let out = trace.output().row(0).to_vec();
        self.recorded = Some(trace);
        Ok(out)
    }

    /// Backward pass against the last [`Mlp::forward_recorded`] call.
    pub fn backward_recorded(&mut self, grad_output: &[f64]) -> Result<()> {
        let trace = self
            .recorded
            .take()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        if grad_output.len() != self.output_dim() {
            let err = Error::shape("output gradient", self.output_dim(), grad_output.len());
            self.recorded = Some(trace);
            return Err(err);
        }
        let g = ArrayView2::from_shape((1, grad_output.len()), grad_output).expect("row vector");
        self.backward(&trace, g)
    }

    /// Copies the last layer's weights for a given output unit; handy in tests.
    pub fn output_row(&self, unit: usize) -> Vec<f64> {
        let (w, _) = self.layer(self.num_layers() - 1);
        w.slice(s![unit, ..]).to_vec()
    }
}
