use ndarray::Array2;
use rand::Rng;

use super::particles::empirical_w1;
use crate::flow::{FlowCriticModel, FlowTrainingSample};
use crate::nn::{clip_global_norm_in_place, AdamState};
use crate::rng::{standard_normal, stream, tags};
use crate::Result;

/// Supervised fit of the flow critic to a fixed two-mode return
/// distribution `0.5 N(-1, 0.1^2) + 0.5 N(1, 0.1^2)` at a constant state.
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalFitConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub euler_steps: usize,
    pub velocity_clip: f64,
    /// Optimizer steps between target snapshots.
    pub snapshot_every: usize,
    pub eval_samples: usize,
    /// Steps between distance evaluations.
    pub eval_every: usize,
}

impl Default for BimodalFitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 3000,
            batch_size: 256,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            euler_steps: 5,
            velocity_clip: 0.2,
            snapshot_every: 8,
            eval_samples: 10_000,
            eval_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalFit {
    /// (optimizer steps taken, W1 to fresh target draws).
    pub history: Vec<(usize, f64)>,
    pub model: FlowCriticModel,
}

impl BimodalFit {
    pub fn final_w1(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.1)
    }
}

pub fn bimodal_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let centre = if rng.random::<bool>() { 1.0 } else { -1.0 };
    centre + 0.1 * standard_normal(rng)
}

pub fn fit_bimodal_flow(cfg: &BimodalFitConfig) -> Result<BimodalFit> {
    let mut model = FlowCriticModel::seeded(
        1,
        &cfg.hidden,
        cfg.euler_steps,
        cfg.velocity_clip,
        &mut stream(cfg.seed, &[tags::CRITIC_INIT]),
    )?;
    let mut adam = AdamState::for_net(&model.velocity_net, cfg.learning_rate);
    let mut data_rng = stream(cfg.seed, &[tags::TOY_DATA]);
    let mut path_rng = stream(cfg.seed, &[tags::CFM_PATH]);
    let mut eval_rng = stream(cfg.seed, &[tags::TOY_EVAL]);
    let states = Array2::zeros((cfg.eval_samples, 1));

    let mut evaluate = |model: &FlowCriticModel| -> Result<f64> {
        let priors: Vec<f64> = (0..cfg.eval_samples).map(|_| standard_normal(&mut eval_rng)).collect();
        let generated = model.sample_batch(states.view(), &priors)?;
        let target: Vec<f64> = (0..cfg.eval_samples).map(|_| bimodal_draw(&mut eval_rng)).collect();
        empirical_w1(&generated, &target)
    };

    let mut history = vec![(0, evaluate(&model)?)];
    for step in 0..cfg.steps {
        if step % cfg.snapshot_every.max(1) == 0 {
            model.snapshot_target();
        }
        let batch = (0..cfg.batch_size)
            .map(|_| {
                let z = bimodal_draw(&mut data_rng);
                FlowTrainingSample::draw(vec![0.0], z, &mut path_rng)
            })
            .collect::<Result<Vec<_>>>()?;
        model.clipped_cfm_loss(&batch)?;
        clip_global_norm_in_place(&mut [model.velocity_net.grads_mut()], 1.0);
        adam.step(&mut model.velocity_net)?;
        if (step + 1) % cfg.eval_every.max(1) == 0 || step + 1 == cfg.steps {
            history.push((step + 1, evaluate(&model)?));
        }
    }
    Ok(BimodalFit { history, model })
}
