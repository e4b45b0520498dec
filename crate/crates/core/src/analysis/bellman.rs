use rand::Rng;

use super::particles::ParticleDistribution;
use crate::{Error, Result};

/// Finite Markov reward process: a fixed policy folded into `P(s'|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistMDP {
    transitions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    gamma: f64,
}

impl TabularDistMDP {
    pub fn new(transitions: Vec<Vec<f64>>, rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = rewards.len();
        if n == 0 || transitions.len() != n {
            return Err(Error::shape("transition rows", n, transitions.len()));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape("transition columns", n, row.len()));
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "transition row {s} is not a distribution (sum {total})"
                )));
            }
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Domain(format!("discount must be in [0, 1), got {gamma}")));
        }
        Ok(Self {
            transitions,
            rewards,
            gamma,
        })
    }

    /// Uniform-Dirichlet transition rows and rewards uniform in [-1, 1].
    pub fn random<R: Rng + ?Sized>(states: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let transitions = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..states).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            })
            .collect();
        let rewards = (0..states).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(transitions, rewards, gamma)
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }
}

/// Largest per-state 1-Wasserstein distance.
pub fn sup_w1(p: &[ParticleDistribution], q: &[ParticleDistribution]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("state count", p.len(), q.len()));
    }
    p.iter().zip(q).try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(a.w1(b)?)))
}

/// One distributional Bellman backup. The weighted mixture of
/// `r(s) + gamma * Z(s')` is resampled back to `P` particles systematically,
/// at quantile levels `(k + offset) / P` for a single `offset` in [0, 1).
pub fn apply_bellman(
    mdp: &TabularDistMDP,
    dists: &[ParticleDistribution],
    offset: f64,
) -> Result<Vec<ParticleDistribution>> {
    let n = mdp.num_states();
    if dists.len() != n {
        return Err(Error::shape("per-state distributions", n, dists.len()));
    }
    let count = dists[0].len();
    if dists.iter().any(|d| d.len() != count) {
        return Err(Error::Domain("particle counts differ across states".into()));
    }
    if !(0.0..1.0).contains(&offset) {
        return Err(Error::Domain(format!(
            "resampling offset must be in [0, 1), got {offset}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(n * count);
        for (next, &prob) in mdp.transitions[s].iter().enumerate() {
            if prob == 0.0 {
                continue;
            }
            let w = prob / count as f64;
            atoms.extend(
                dists[next]
                    .particles()
                    .iter()
                    .map(|z| (mdp.rewards[s] + mdp.gamma * z, w)),
            );
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut particles = Vec::with_capacity(count);
        let mut cum = 0.0;
        let mut j = 0;
        for k in 0..count {
            let level = (k as f64 + offset) / count as f64;
            while j + 1 < atoms.len() && cum + atoms[j].1 < level {
                cum += atoms[j].1;
                j += 1;
            }
            particles.push(atoms[j].0);
        }
        out.push(ParticleDistribution::new(particles)?);
    }
    Ok(out)
}

/// Midpoint-resampled Bellman iteration run `iterations` times from `init`.
/// Fails with a configuration error if the last step still moved by more
/// than `1e-9`.
pub fn converged_fixed_point(
    mdp: &TabularDistMDP,
    init: &[ParticleDistribution],
    iterations: usize,
) -> Result<Vec<ParticleDistribution>> {
    let mut p = init.to_vec();
    let mut last_move = f64::INFINITY;
    for _ in 0..iterations {
        let next = apply_bellman(mdp, &p, 0.5)?;
        last_move = sup_w1(&next, &p)?;
        p = next;
    }
    if !(last_move <= 1e-9) {
        return Err(Error::Config(format!(
            "Bellman iteration did not converge in {iterations} steps (last move {last_move:e})"
        )));
    }
    Ok(p)
}

/// Distances to the fixed point along a perturbed Bellman iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `distances[t]` is the sup-W1 distance after `t` iterations.
    pub distances: Vec<f64>,
    pub eps_max: f64,
    pub gamma: f64,
}

impl ConvergenceReport {
    /// `eps_max / (1 - gamma)`.
    pub fn bound(&self) -> f64 {
        self.eps_max / (1.0 - self.gamma)
    }

    /// Largest distance over the last `fraction` of iterations.
    pub fn tail_max(&self, fraction: f64) -> f64 {
        let iters = self.distances.len() - 1;
        let tail = ((iters as f64 * fraction).ceil() as usize).clamp(1, iters.max(1));
        self.distances[self.distances.len() - tail..]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Largest one-step ratio `d[t+1] / d[t]` for `t >= burn_in`, ignoring
    /// steps that start below `floor` (round-off territory).
    pub fn max_ratio(&self, burn_in: usize, floor: f64) -> Option<f64> {
        self.distances
            .windows(2)
            .enumerate()
            .filter(|(t, w)| *t >= burn_in && w[0] > floor)
            .map(|(_, w)| w[1] / w[0])
            .reduce(f64::max)
    }
}

/// Iterates `p <- perturb(T p)` from `init`, where every state's particles
/// are shifted by an independent uniform offset in `[-eps_max, eps_max]`,
/// and records distances to the exact fixed point (200 unperturbed steps).
pub fn convergence_experiment<R: Rng + ?Sized>(
    mdp: &TabularDistMDP,
    init: &[ParticleDistribution],
    eps_max: f64,
    iterations: usize,
    rng: &mut R,
) -> Result<ConvergenceReport> {
    if !(eps_max >= 0.0) {
        return Err(Error::Domain(format!("eps_max must be non-negative, got {eps_max}")));
    }
    let fixed = converged_fixed_point(mdp, init, 200)?;
    let mut p = init.to_vec();
    let mut distances = vec![sup_w1(&p, &fixed)?];
    for _ in 0..iterations {
        p = apply_bellman(mdp, &p, 0.5)?;
        if eps_max > 0.0 {
            p = p
                .iter()
                .map(|d| d.shift_scale(1.0, rng.random_range(-eps_max..=eps_max)))
                .collect();
        }
        distances.push(sup_w1(&p, &fixed)?);
    }
    Ok(ConvergenceReport {
        distances,
        eps_max,
        gamma: mdp.gamma(),
    })
}
