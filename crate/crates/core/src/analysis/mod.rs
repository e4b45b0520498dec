//! Numerical checks of the contraction, convergence and variance-reduction
//! properties, plus the single-step toy experiment.

mod bellman;
pub mod checks;
mod flow_fit;
mod particles;
pub mod toy;
mod variance;

pub use bellman::{
    apply_bellman, converged_fixed_point, convergence_experiment, sup_w1, ConvergenceReport, TabularDistMDP,
};
pub use flow_fit::{fit_bimodal_flow, BimodalFit, BimodalFitConfig};
pub use particles::{empirical_w1, ParticleDistribution};
pub use variance::{
    gradient_variance_check, phi_derivative_at_zero, unweighted_variance, weighted_variance, VarianceCheck, Verdict,
    MIN_CONCLUSIVE_TRIALS,
};
