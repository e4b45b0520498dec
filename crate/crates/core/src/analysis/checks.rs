//! The theory-check suite: Wasserstein metric properties, Bellman contraction,
//! perturbed convergence, and the variance-reduction claims.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bellman::{apply_bellman, convergence_experiment, sup_w1, TabularDistMDP};
use super::particles::{empirical_w1, ParticleDistribution};
use super::variance::{gradient_variance_check, phi_derivative_at_zero, Verdict};
use crate::rng::{standard_normal, stream, tags};
use crate::Result;

/// Exactness tolerance for the Wasserstein identities.
pub const W1_TOLERANCE: f64 = 1e-12;
/// Allowed excess of a measured contraction factor over the discount.
pub const CONTRACTION_SLACK: f64 = 0.02;
/// Allowed relative excess of the convergence tail over its bound.
pub const BOUND_SLACK: f64 = 0.10;
/// Iterations skipped before one-step ratios are checked.
pub const BURN_IN: usize = 5;
/// Distances below this are round-off and excluded from ratios.
pub const RATIO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub seed: u64,
    pub gamma: f64,
    pub eps_max: f64,
    pub particles: usize,
    pub iterations: usize,
    pub convergence_runs: usize,
    pub contraction_cases: usize,
    pub metric_sets: usize,
    pub phi_vectors: usize,
    pub kappa_vectors: usize,
    pub kappa_len: usize,
    pub alpha: f64,
    pub trials: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: 0.5,
            eps_max: 0.1,
            particles: 512,
            iterations: 200,
            convergence_runs: 20,
            contraction_cases: 100,
            metric_sets: 1000,
            phi_vectors: 1000,
            kappa_vectors: 100,
            kappa_len: 64,
            alpha: 0.1,
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        write!(f, "{:<24} {:<12} {}", self.name, v, self.detail)
    }
}

fn result(name: &'static str, ok: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn random_set<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-10.0..10.0)).collect()
}

pub(crate) fn random_dists<R: Rng + ?Sized>(
    states: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ParticleDistribution>> {
    (0..states)
        .map(|_| {
            let mean = rng.random_range(-3.0..3.0);
            let sd = rng.random_range(0.2..2.0);
            ParticleDistribution::new((0..count).map(|_| mean + sd * standard_normal(rng)).collect())
        })
        .collect()
}

/// Shift invariance, absolute homogeneity and the triangle inequality.
pub fn check_metric_properties(cfg: &ChecksConfig) -> Result<Vec<CheckResult>> {
    let mut rng = stream(cfg.seed, &[tags::CHECKS, 1]);
    let (mut shift_err, mut scale_err, mut triangle_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..cfg.metric_sets {
        let len = rng.random_range(1..=64);
        let x = ParticleDistribution::new(random_set(len, &mut rng))?;
        let y = ParticleDistribution::new(random_set(len, &mut rng))?;
        let z = ParticleDistribution::new(random_set(len, &mut rng))?;
        let base = x.w1(&y)?;
        let c = rng.random_range(-10.0..10.0);
        shift_err = shift_err.max((x.shift_scale(1.0, c).w1(&y.shift_scale(1.0, c))? - base).abs());
        let a = rng.random_range(-5.0..5.0);
        scale_err = scale_err.max((x.shift_scale(a, 0.0).w1(&y.shift_scale(a, 0.0))? - a.abs() * base).abs());
        let excess = empirical_w1(x.particles(), z.particles())? - base - y.w1(&z)?;
        triangle_excess = triangle_excess.max(excess);
    }
    Ok(vec![
        result(
            "w1_shift_invariance",
            shift_err <= W1_TOLERANCE,
            format!("max deviation {shift_err:.3e}"),
        ),
        result(
            "w1_homogeneity",
            scale_err <= W1_TOLERANCE,
            format!("max deviation {scale_err:.3e}"),
        ),
        result(
            "w1_triangle",
            triangle_excess <= W1_TOLERANCE,
            format!("max excess {triangle_excess:.3e}"),
        ),
    ])
}

/// Measured contraction factors of the resampled Bellman operator on random
/// MDPs and distribution pairs, sharing one resampling offset per pair.
pub fn check_contraction(cfg: &ChecksConfig) -> Result<CheckResult> {
    let mut rng = stream(cfg.seed, &[tags::CHECKS, 2]);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0;
    for _ in 0..cfg.contraction_cases {
        let states = rng.random_range(2..=5);
        let gamma = rng.random_range(0.3..0.95);
        let mdp = TabularDistMDP::random(states, gamma, &mut rng)?;
        let p = random_dists(states, cfg.particles, &mut rng)?;
        let q = random_dists(states, cfg.particles, &mut rng)?;
        let offset = rng.random::<f64>();
        let ratio = sup_w1(&apply_bellman(&mdp, &p, offset)?, &apply_bellman(&mdp, &q, offset)?)? / sup_w1(&p, &q)?;
        if ratio - gamma > worst {
            worst = ratio - gamma;
            worst_ratio = ratio;
        }
    }
    Ok(result(
        "bellman_contraction",
        worst <= CONTRACTION_SLACK,
        format!(
            "{} cases, max ratio - gamma = {worst:.4} (ratio {worst_ratio:.4})",
            cfg.contraction_cases
        ),
    ))
}

/// Perturbed iteration stays within `eps_max / (1 - gamma)` (plus slack) over
/// the last 20% of iterations, and the unperturbed iteration contracts.
pub fn check_convergence(cfg: &ChecksConfig) -> Result<Vec<CheckResult>> {
    let mut worst_tail_ratio = 0.0f64;
    let mut worst_step = f64::NEG_INFINITY;
    let bound = cfg.eps_max / (1.0 - cfg.gamma);
    for run in 0..cfg.convergence_runs as u64 {
        let mut rng = stream(cfg.seed, &[tags::CHECKS, 3, run]);
        let mdp = TabularDistMDP::random(3, cfg.gamma, &mut rng)?;
        let init = random_dists(3, cfg.particles, &mut rng)?;
        let noisy = convergence_experiment(&mdp, &init, cfg.eps_max, cfg.iterations, &mut rng)?;
        let tail = noisy.tail_max(0.2);
        let allowed = bound * (1.0 + BOUND_SLACK);
        worst_tail_ratio = worst_tail_ratio.max(if allowed > 0.0 {
            tail / allowed
        } else if tail > RATIO_FLOOR {
            f64::INFINITY
        } else {
            0.0
        });
        let exact = convergence_experiment(&mdp, &init, 0.0, cfg.iterations, &mut rng)?;
        if let Some(r) = exact.max_ratio(BURN_IN, RATIO_FLOOR) {
            worst_step = worst_step.max(r - cfg.gamma);
        }
    }
    Ok(vec![
        result(
            "convergence_bound",
            worst_tail_ratio <= 1.0,
            format!(
                "bound {bound:.4} (eps_max {}, gamma {}), worst tail / (1.1 bound) = {worst_tail_ratio:.4}",
                cfg.eps_max, cfg.gamma
            ),
        ),
        result(
            "convergence_rate",
            worst_step <= CONTRACTION_SLACK,
            format!("max d[t+1]/d[t] - gamma past burn-in = {worst_step:.4}"),
        ),
    ])
}

/// Sign of the variance slope at zero temperature.
pub fn check_phi(cfg: &ChecksConfig) -> Result<CheckResult> {
    let mut rng = stream(cfg.seed, &[tags::CHECKS, 4]);
    let mut negatives = 0usize;
    let mut zeros = 0usize;
    let constants = 100;
    for _ in 0..cfg.phi_vectors {
        let len = rng.random_range(2..=64);
        let k: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
        if phi_derivative_at_zero(&k)? < 0.0 {
            negatives += 1;
        }
    }
    for _ in 0..constants {
        let len = rng.random_range(2..=64);
        let c = rng.random_range(0.0..3.0);
        if phi_derivative_at_zero(&vec![c; len])? == 0.0 {
            zeros += 1;
        }
    }
    Ok(result(
        "phi_slope_sign",
        negatives == cfg.phi_vectors && zeros == constants,
        format!(
            "{negatives}/{} negative, {zeros}/{constants} constant vectors exactly zero",
            cfg.phi_vectors
        ),
    ))
}

/// Closed-form reduction and Monte Carlo agreement on random CoV vectors.
pub fn check_variance(cfg: &ChecksConfig) -> Result<CheckResult> {
    let mut reduced = 0usize;
    let mut agreed = 0usize;
    let mut worst_z = 0.0f64;
    let mut inconclusive = false;
    for v in 0..cfg.kappa_vectors as u64 {
        let mut rng = stream(cfg.seed, &[tags::CHECKS, 5, v]);
        let k: Vec<f64> = (0..cfg.kappa_len).map(|_| rng.random_range(0.0..3.0)).collect();
        let check = gradient_variance_check(&k, cfg.alpha, cfg.trials, &mut rng)?;
        if check.reduced() {
            reduced += 1;
        }
        if check.agrees(3.0) {
            agreed += 1;
        }
        worst_z = worst_z
            .max((check.mc_weighted - check.closed_weighted).abs() / check.se_weighted)
            .max((check.mc_unweighted - check.closed_unweighted).abs() / check.se_unweighted);
        inconclusive |= check.verdict() == Verdict::Inconclusive;
    }
    let n = cfg.kappa_vectors;
    let detail = format!(
        "{reduced}/{n} reduced, {agreed}/{n} within 3 SE (worst |z| {worst_z:.2}), {} trials",
        cfg.trials
    );
    Ok(CheckResult {
        name: "variance_reduction",
        verdict: if reduced < n {
            Verdict::Fail
        } else if inconclusive {
            Verdict::Inconclusive
        } else if agreed == n {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        detail,
    })
}

pub fn run_checks(cfg: &ChecksConfig) -> Result<Vec<CheckResult>> {
    let mut out = check_metric_properties(cfg)?;
    out.push(check_contraction(cfg)?);
    out.extend(check_convergence(cfg)?);
    out.push(check_phi(cfg)?);
    out.push(check_variance(cfg)?);
    Ok(out)
}
