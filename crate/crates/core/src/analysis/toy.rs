//! The single-step toy experiment: point and flow critics fit on noisy
//! rewards from the training square, evaluated on a grid over the full square.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::{toy_reward, toy_sample_state, toy_true_value, ToyNoise, ToyRegion};
use crate::flow::{sample_states, FlowCriticModel, FlowTrainingSample};
use crate::nn::{clip_global_norm_in_place, Activation, AdamState, Mlp};
use crate::rng::{stream, tags};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub seed: u64,
    /// Fixed training set size, drawn uniformly from the training square.
    pub train_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_norm: f64,
    pub point_hidden: Vec<usize>,
    pub flow_hidden: Vec<usize>,
    pub n_value_samples: usize,
    pub truncation: usize,
    pub euler_steps: usize,
    pub velocity_clip: f64,
    /// Optimizer steps between flow target snapshots.
    pub snapshot_every: usize,
    /// Cells per axis of the evaluation grid over the full square.
    pub grid_size: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_samples: 200_000,
            epochs: 10,
            batch_size: 512,
            learning_rate: 5e-4,
            grad_norm: 1.0,
            point_hidden: vec![128, 128],
            flow_hidden: vec![128, 128],
            n_value_samples: 10,
            truncation: 1,
            euler_steps: 5,
            velocity_clip: 0.2,
            snapshot_every: 8,
            grid_size: 61,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_samples == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "train_samples, batch_size and epochs must be positive".into(),
            ));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        if self.n_value_samples < 2 || self.truncation >= self.n_value_samples {
            return Err(Error::Config("need 0 <= truncation < n_value_samples".into()));
        }
        if self.point_hidden.contains(&0) || self.flow_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_norm > 0.0) || !(self.velocity_clip > 0.0) {
            return Err(Error::Config(
                "learning_rate, grad_norm and velocity_clip must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Square grid over `[-3, 3]^2`, row-major in y then x.
pub fn toy_grid(size: usize) -> Vec<[f64; 2]> {
    let half = ToyRegion::Full.half_width();
    let coord = |i: usize| (2 * i) as f64 * half / (size - 1) as f64 - half;
    (0..size)
        .flat_map(|iy| (0..size).map(move |ix| [coord(ix), coord(iy)]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRegion {
    /// `|s| <= 1`, the high-noise disk.
    Disk,
    /// Inside the training square, outside the disk.
    TrainRing,
    /// Inside the training square (disk and ring together).
    Train,
    /// Outside the training square.
    Outside,
}

impl GridRegion {
    pub const ALL: [GridRegion; 4] = [
        GridRegion::Disk,
        GridRegion::TrainRing,
        GridRegion::Train,
        GridRegion::Outside,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridRegion::Disk => "disk",
            GridRegion::TrainRing => "train_ring",
            GridRegion::Train => "train",
            GridRegion::Outside => "outside",
        }
    }

    pub fn contains(self, s: [f64; 2]) -> bool {
        let half = ToyRegion::Train.half_width();
        let in_train = s[0].abs() <= half && s[1].abs() <= half;
        let in_disk = s[0].hypot(s[1]) <= ToyNoise::default().noisy_radius;
        match self {
            GridRegion::Disk => in_disk,
            GridRegion::TrainRing => in_train && !in_disk,
            GridRegion::Train => in_train,
            GridRegion::Outside => !in_train,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCell {
    pub state: [f64; 2],
    pub true_value: f64,
    pub point_value: f64,
    pub flow_value: f64,
    pub cov: f64,
}

impl ToyCell {
    pub fn err_point(&self) -> f64 {
        (self.point_value - self.true_value).abs()
    }

    pub fn err_flow(&self) -> f64 {
        (self.flow_value - self.true_value).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionStats {
    pub region: GridRegion,
    pub cells: usize,
    pub mean_err_point: f64,
    pub max_err_point: f64,
    pub mean_err_flow: f64,
    pub max_err_flow: f64,
    pub mean_cov: f64,
    pub max_cov: f64,
}

/// Error and CoV maps on the grid with region aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMaps {
    pub cells: Vec<ToyCell>,
    pub regions: Vec<RegionStats>,
}

impl ErrorMaps {
    pub fn region(&self, region: GridRegion) -> &RegionStats {
        self.regions
            .iter()
            .find(|r| r.region == region)
            .expect("every region is aggregated")
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, column: &str, value: impl Fn(&ToyCell) -> f64) -> Result<()> {
        writeln!(out, "x,y,{column}")?;
        for c in &self.cells {
            writeln!(out, "{},{},{}", c.state[0], c.state[1], value(c))?;
        }
        Ok(())
    }

    pub fn write_grid_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "x,y,err_point,err_flow,cov")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.state[0],
                c.state[1],
                c.err_point(),
                c.err_flow(),
                c.cov
            )?;
        }
        Ok(())
    }

    /// `region.statistic = value` lines.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.regions {
            let name = r.region.name();
            let _ = writeln!(s, "{name}.cells = {}", r.cells);
            for (key, v) in [
                ("mean_err_point", r.mean_err_point),
                ("max_err_point", r.max_err_point),
                ("mean_err_flow", r.mean_err_flow),
                ("max_err_flow", r.max_err_flow),
                ("mean_cov", r.mean_cov),
                ("max_cov", r.max_cov),
            ] {
                let _ = writeln!(s, "{name}.{key} = {v}");
            }
        }
        s
    }
}

/// Builds the maps from per-cell estimates.
pub fn toy_error_maps(grid: &[[f64; 2]], point_values: &[f64], flow_values: &[f64], covs: &[f64]) -> Result<ErrorMaps> {
    for (ctx, len) in [
        ("point values", point_values.len()),
        ("flow values", flow_values.len()),
        ("CoV values", covs.len()),
    ] {
        if len != grid.len() {
            return Err(Error::shape(ctx, grid.len(), len));
        }
    }
    let cells: Vec<ToyCell> = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| ToyCell {
            state: s,
            true_value: toy_true_value(s[0], s[1]),
            point_value: point_values[i],
            flow_value: flow_values[i],
            cov: covs[i],
        })
        .collect();
    let regions = GridRegion::ALL
        .iter()
        .map(|&region| {
            let inside: Vec<&ToyCell> = cells.iter().filter(|c| region.contains(c.state)).collect();
            let n = inside.len().max(1) as f64;
            let mean = |f: &dyn Fn(&ToyCell) -> f64| inside.iter().map(|c| f(c)).sum::<f64>() / n;
            let max = |f: &dyn Fn(&ToyCell) -> f64| inside.iter().map(|c| f(c)).fold(0.0, f64::max);
            RegionStats {
                region,
                cells: inside.len(),
                mean_err_point: mean(&ToyCell::err_point),
                max_err_point: max(&ToyCell::err_point),
                mean_err_flow: mean(&ToyCell::err_flow),
                max_err_flow: max(&ToyCell::err_flow),
                mean_cov: mean(&|c| c.cov),
                max_cov: max(&|c| c.cov),
            }
        })
        .collect();
    Ok(ErrorMaps { cells, regions })
}

/// Both critics and their training state.
pub struct ToyExperiment {
    cfg: ToyConfig,
    pub point: Mlp,
    pub flow: FlowCriticModel,
    trained: bool,
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyEpoch {
    pub point_loss: f64,
    pub flow_loss: f64,
}

impl ToyExperiment {
    pub fn new(cfg: ToyConfig) -> Result<Self> {
        cfg.validate()?;
        let point = Mlp::seeded(
            2,
            &cfg.point_hidden,
            1,
            Activation::Relu,
            &mut stream(cfg.seed, &[tags::CRITIC_INIT, 0]),
        )?;
        let flow = FlowCriticModel::seeded(
            2,
            &cfg.flow_hidden,
            cfg.euler_steps,
            cfg.velocity_clip,
            &mut stream(cfg.seed, &[tags::CRITIC_INIT, 1]),
        )?;
        Ok(Self {
            cfg,
            point,
            flow,
            trained: false,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    /// Draws the training set and runs every epoch; `on_epoch` sees progress.
    pub fn train(&mut self, mut on_epoch: impl FnMut(usize, ToyEpoch)) -> Result<()> {
        let cfg = self.cfg.clone();
        let noise = ToyNoise::default();
        let mut data_rng = stream(cfg.seed, &[tags::TOY_DATA]);
        let mut states = Array2::zeros((cfg.train_samples, 2));
        let mut rewards = Vec::with_capacity(cfg.train_samples);
        for i in 0..cfg.train_samples {
            let s = toy_sample_state(&mut data_rng, ToyRegion::Train);
            states[[i, 0]] = s[0];
            states[[i, 1]] = s[1];
            rewards.push(toy_reward(s, &noise, &mut data_rng));
        }

        let mut point_adam = AdamState::for_net(&self.point, cfg.learning_rate);
        let mut flow_adam = AdamState::for_net(&self.flow.velocity_net, cfg.learning_rate);
        let mut shuffle_rng = stream(cfg.seed, &[tags::SHUFFLE]);
        let mut path_rng = stream(cfg.seed, &[tags::CFM_PATH]);
        let mut order: Vec<usize> = (0..cfg.train_samples).collect();
        let mut step = 0usize;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let (mut point_loss, mut flow_loss, mut batches) = (0.0, 0.0, 0usize);
            for batch in order.chunks(cfg.batch_size) {
                let x = states.select(ndarray::Axis(0), batch);
                let y: Vec<f64> = batch.iter().map(|&i| rewards[i]).collect();

                let trace = self.point.forward_trace(x.view())?;
                let out = trace.output();
                let b = y.len() as f64;
                let mut grad = Array2::zeros((y.len(), 1));
                let mut loss = 0.0;
                for (k, &target) in y.iter().enumerate() {
                    let diff = out[[k, 0]] - target;
                    loss += diff * diff;
                    grad[[k, 0]] = 2.0 * diff / b;
                }
                self.point.backward(&trace, grad.view())?;
                clip_global_norm_in_place(&mut [self.point.grads_mut()], cfg.grad_norm);
                point_adam.step(&mut self.point)?;
                point_loss += loss / b;

                if step.is_multiple_of(cfg.snapshot_every.max(1)) {
                    self.flow.snapshot_target();
                }
                let samples = batch
                    .iter()
                    .zip(&y)
                    .map(|(&i, &target)| {
                        FlowTrainingSample::draw(vec![states[[i, 0]], states[[i, 1]]], target, &mut path_rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                flow_loss += self.flow.clipped_cfm_loss(&samples)?.loss;
                clip_global_norm_in_place(&mut [self.flow.velocity_net.grads_mut()], cfg.grad_norm);
                flow_adam.step(&mut self.flow.velocity_net)?;

                batches += 1;
                step += 1;
            }
            on_epoch(
                epoch,
                ToyEpoch {
                    point_loss: point_loss / batches as f64,
                    flow_loss: flow_loss / batches as f64,
                },
            );
        }
        self.trained = true;
        Ok(())
    }

    /// Grid evaluation. Cell `j` draws its value samples from the stream
    /// `(seed, TOY_EVAL, j)`.
    pub fn evaluate(&self) -> Result<ErrorMaps> {
        self.evaluate_with(self.cfg.n_value_samples, self.cfg.truncation)
    }

    /// [`Self::evaluate`] with a different sample count and truncation.
    pub fn evaluate_with(&self, n_value_samples: usize, truncation: usize) -> Result<ErrorMaps> {
        if !self.trained {
            return Err(Error::State("toy critics must be trained before evaluation".into()));
        }
        let grid = toy_grid(self.cfg.grid_size);
        let x = Array2::from_shape_fn((grid.len(), 2), |(i, j)| grid[i][j]);
        let point = self.point.forward_batch(x.view())?.column(0).to_vec();
        let seed = self.cfg.seed;
        let samples = sample_states(
            &self.flow.velocity_net,
            x.view(),
            n_value_samples,
            truncation,
            self.cfg.euler_steps,
            |j| stream(seed, &[tags::TOY_EVAL, j as u64]),
        )?;
        let flow: Vec<f64> = samples.iter().map(|s| s.set.truncated_value).collect();
        let covs: Vec<f64> = samples.iter().map(|s| s.set.cov).collect();
        toy_error_maps(&grid, &point, &flow, &covs)
    }
}
