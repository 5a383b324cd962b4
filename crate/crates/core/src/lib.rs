//! Reward-weighted distribution matching distillation for video volumes.
//!
//! Three differentiable rewards score a rollout; their input gradients become
//! saliency maps that are fused, decomposed into temporal and spatial weights
//! and applied elementwise to the distillation residual. A scalar reliability
//! weight derived from a balanced reward scales the whole loss. [`sim`] runs
//! the pipeline end to end against closed-form Gaussian critics.

pub mod artifacts;
pub mod balance;
pub mod checks;
pub mod config;
pub mod decomposition;
pub mod dmd;
mod error;
pub mod reward;
pub mod rng;
pub mod saliency;
pub mod sim;
pub mod volume;

pub use error::{Error, Result};
