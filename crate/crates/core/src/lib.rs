//! Denoising diffusion with Gaussian, Gaussian-mixture and Gamma noise.
//!
//! The crate covers the whole pipeline at toy scale: noise schedules
//! ([`schedule`]), the three noise families ([`noise`]), forward jumps and
//! chains ([`forward`]), DDPM and DDIM samplers ([`reverse`]), a small MLP
//! noise predictor with exact gradients ([`model`]), training on synthetic
//! datasets ([`train`]), and the statistics used to check all of it
//! ([`stats`]).

pub mod cli;
pub mod error;
pub mod forward;
pub mod model;
pub mod noise;
pub mod reverse;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;
