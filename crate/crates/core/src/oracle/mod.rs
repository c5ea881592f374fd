//! Models with exact reference solutions.

pub mod hmm;
pub mod kalman;

pub use hmm::{ConditionalFilter, GridHmm, GridHmmSpec};
pub use kalman::{KalmanOutput, LinearGaussian, LinearGaussianSpec};
