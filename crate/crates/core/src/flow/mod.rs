//! The flow-matching value critic.
//!
//! A velocity network `f(o, t, s)` transports a standard normal prior draw
//! to a return sample for state `s` by Euler integration over `t in [0, 1]`.
//! Training regresses the network onto the conditional velocity of the
//! straight path between a prior draw and a distributional return target,
//! with updates limited to a band around a frozen target network.

mod field;
mod model;
mod path;
mod samples;

pub use field::{euler_sample, euler_sample_batch, ConstantField, FnField, VelocityField};
pub use model::{sample_states, sample_value_set, CfmLoss, FlowCriticModel, FlowTrainingSample, StateSamples};
pub use path::{clipped_cfm_term, clipped_velocity, conditional_velocity, interpolate};
pub use samples::{cov_weight, normalize_weights, write_samples_csv, ValueSampleSet, COV_EPS};
