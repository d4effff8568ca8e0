//! Physics-informed neural networks for forward and inverse problems.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod autodiff;
pub mod harness;
pub mod network;
pub mod oracles;
pub mod problems;
pub mod scalar;
pub mod tables;
pub mod training;

/// Jet over plain `f64` values.
pub type Jet64 = autodiff::Jet<f64>;
/// Jet over plain `f32` values.
pub type Jet32 = autodiff::Jet<f32>;
pub type Mlp64 = network::MlpParams<f64>;
pub type Mlp32 = network::MlpParams<f32>;
pub type Adam64 = training::AdamState<f64>;
pub type Adam32 = training::AdamState<f32>;
pub type Tape64 = autodiff::Tape<f64>;
