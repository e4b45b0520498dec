use crate::{Error, Result};

/// One-dimensional 1-Wasserstein distance between two equal-size sample
/// sets: the mean absolute difference of their sorted values.
pub fn empirical_w1(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("sample set sizes", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::Domain("empty sample sets".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    Ok(sorted_w1(&xs, &ys))
}

fn sorted_w1(xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(a, b)| (a - b).abs()).sum::<f64>() / xs.len() as f64
}

/// Equal-weight particles, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleDistribution {
    particles: Vec<f64>,
}

impl ParticleDistribution {
    pub fn new(mut particles: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Domain(
                "a particle distribution needs at least one particle".into(),
            ));
        }
        if particles.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("particles must be finite".into()));
        }
        particles.sort_by(f64::total_cmp);
        Ok(Self { particles })
    }

    pub fn point_mass(value: f64, count: usize) -> Result<Self> {
        Self::new(vec![value; count])
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.particles.iter().sum::<f64>() / self.len() as f64
    }

    /// Maps every particle `z` to `scale * z + shift`.
    pub fn shift_scale(&self, scale: f64, shift: f64) -> Self {
        let mut particles: Vec<f64> = self.particles.iter().map(|z| scale * z + shift).collect();
        if scale < 0.0 {
            particles.reverse();
        }
        Self { particles }
    }

    pub fn w1(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape("particle counts", self.len(), other.len()));
        }
        Ok(sorted_w1(&self.particles, &other.particles))
    }
}
