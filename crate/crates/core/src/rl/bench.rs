//! Multi-seed comparison of critic kinds.

use super::config::{CriticKind, TrainConfig};
use super::trainer::{IterationMetrics, Trainer};
use crate::Result;

/// Metrics trace of one (critic, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub critic: CriticKind,
    pub seed: u64,
    pub metrics: Vec<IterationMetrics>,
}

/// Mean and sample standard deviation of final returns over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub critic: CriticKind,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub final_returns: Vec<f64>,
}

/// Average `mean_return` over the last 10% of iterations (at least one) that
/// have completed episodes.
pub fn final_fraction_return(metrics: &[IterationMetrics]) -> Option<f64> {
    let tail = metrics.len().div_ceil(10).max(1);
    let vals: Vec<f64> = metrics
        .iter()
        .skip(metrics.len().saturating_sub(tail))
        .filter_map(|m| m.mean_return)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Runs every critic for every seed with `iterations` training iterations.
pub fn run_bench(
    base: &TrainConfig,
    critics: &[CriticKind],
    seeds: &[u64],
    iterations: usize,
    mut on_iteration: impl FnMut(CriticKind, u64, &IterationMetrics),
) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for &critic in critics {
        for &seed in seeds {
            let mut trainer = Trainer::new(TrainConfig {
                critic,
                seed,
                ..base.clone()
            })?;
            let mut metrics = Vec::with_capacity(iterations);
            for _ in 0..iterations {
                let m = trainer.train_iteration()?;
                on_iteration(critic, seed, &m);
                metrics.push(m);
            }
            runs.push(BenchRun { critic, seed, metrics });
        }
    }
    Ok(runs)
}

pub fn summarize_bench(runs: &[BenchRun]) -> Vec<BenchRow> {
    let mut rows: Vec<BenchRow> = Vec::new();
    for run in runs {
        let value = final_fraction_return(&run.metrics).unwrap_or(f64::NAN);
        match rows.iter_mut().find(|r| r.critic == run.critic) {
            Some(row) => row.final_returns.push(value),
            None => rows.push(BenchRow {
                critic: run.critic,
                runs: 0,
                mean: 0.0,
                std: 0.0,
                final_returns: vec![value],
            }),
        }
    }
    for row in &mut rows {
        let n = row.final_returns.len();
        row.runs = n;
        row.mean = row.final_returns.iter().sum::<f64>() / n as f64;
        row.std = if n > 1 {
            (row.final_returns.iter().map(|v| (v - row.mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
    }
    rows
}
