//! On-policy training with a flow-matching critic or one of the point,
//! ensemble and quantile baselines.

pub mod bench;
mod buffer;
mod config;
pub mod critics;
mod objective;
mod policy;
pub mod targets;
mod trainer;

pub use bench::{final_fraction_return, run_bench, summarize_bench, BenchRow, BenchRun};
pub use buffer::{collect_rollouts, RolloutBuffer};
pub use config::{CriticKind, TrainConfig};
pub use critics::{
    build_critic, ensemble_value, quantile_huber_loss, quantile_midpoints, CriticEstimates, CriticUpdate, EnsembleMode,
    ValueCritic,
};
pub use objective::{clipped_surrogate, weighted_ppo_objective, PpoTerms};
pub use policy::{GaussianPolicy, PolicyEval};
pub use trainer::{IterationMetrics, Trainer};
