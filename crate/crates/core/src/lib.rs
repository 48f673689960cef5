//! Variational autoencoders with imaginary noise models (Gaussian σ-VAE,
//! Laplace α-VAE, β-weighted variants and a Bernoulli baseline), a neural
//! empirical Bayes denoiser, and the tooling to verify their scale
//! equivalences and measure KL scaling and noise robustness.

pub mod analysis;
pub mod dataio;
pub mod deen;
pub mod equivalence;
pub mod error;
pub mod gradsuite;
pub mod nn;
pub mod noise;
pub mod real;
pub mod vae;

pub use error::{Error, Result};
