use super::Mlp;
use crate::{Error, Result};

/// Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_net(net: &Mlp, learning_rate: f64) -> Self {
        Self::new(net.params().len(), learning_rate)
    }

    /// Applies one update to `net` from its accumulated gradient and clears
    /// the accumulator, whether or not the update was accepted.
    pub fn step(&mut self, net: &mut Mlp) -> Result<()> {
        let (p, g) = net.params_and_grads();
        self.step_parts(&mut [(p, g)])
    }

    /// One update over several (params, grads) slices laid end to end.
    ///
    /// Non-finite gradients reject the whole update with a numeric error.
    pub fn step_parts(&mut self, parts: &mut [(&mut [f64], &mut [f64])]) -> Result<()> {
        let total: usize = parts.iter().map(|(p, _)| p.len()).sum();
        if total != self.first_moment.len() {
            return Err(Error::shape("optimizer parameters", self.first_moment.len(), total));
        }
        let finite = parts.iter().all(|(_, g)| g.iter().all(|v| v.is_finite()));
        if !finite {
            for (_, g) in parts.iter_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            return Err(Error::Numeric("non-finite gradient, update rejected".into()));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for (params, grads) in parts.iter_mut() {
            let m = &mut self.first_moment[offset..offset + params.len()];
            let v = &mut self.second_moment[offset..offset + params.len()];
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                grads[i] = 0.0;
            }
            offset += params.len();
        }
        Ok(())
    }
}
