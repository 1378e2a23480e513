//! Exceptionality-based counterfactual and semi-factual explanations for
//! image classifiers.
//!
//! The pipeline inverts a test image into a generator's latent space, picks a
//! counterfactual class, flags layer-X features that are statistically
//! exceptional for that class under per-neuron hurdle models, resets them to
//! their expected values, and renders the edited features back to pixels.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod evalx;
pub mod hurdle;
pub mod net;
pub mod piece;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
