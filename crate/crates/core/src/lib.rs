//! Recursive nested particle filtering for joint Bayesian estimation of static
//! parameters and hidden states in discrete-time state-space models.
//!
//! The outer layer of the filter carries `N` parameter samples; each one owns
//! an inner bootstrap filter of `M` state particles whose average likelihood
//! is used as the outer importance weight. Parameters are rejuvenated with a
//! jittering kernel that mixes a point mass at the old value with a truncated
//! Gaussian on the parameter box.
//!
//! Besides the filters themselves the crate ships the stochastic Lorenz 63
//! experiment model, exact oracles (finite-grid HMMs and a scalar Kalman
//! filter) used to check convergence, estimators and diagnostics, and the
//! study harness behind the `nsmc` command-line tool.

pub mod error;
pub mod harness;
pub mod inner;
pub mod jitter;
pub mod lorenz63;
pub mod metrics;
pub mod model;
pub mod nested;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use jitter::JitterConfig;
pub use model::{Observation, ParameterBox, ParameterVector, StateSpaceModel, StateVector};
pub use nested::{NestedFilterState, OuterParticle, PosteriorSnapshot};
pub use rng::{StreamKey, StreamRng};
