//! Encoder, imaginary-noise decoders, the ELBO for every decoder kind, and
//! training.

mod model;
mod train;

use std::fmt;

pub use model::{
    kl_to_standard_normal, reparameterize, reconstruct, ElboBatch, ElboTerms, PosteriorStats,
    VaeGrads, VaeModel,
};
pub use train::{train, train_with, Schedule};

use crate::dataio::{Hyper, ModelKind};
use crate::error::{Error, Result};

/// Latent and layer dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub d: usize,
    pub d_z: usize,
    /// Hidden widths between input and the `2·d_z` posterior readout.
    pub encoder_hidden: Vec<usize>,
    /// Hidden widths between `d_z` and the `d`-wide logistic readout.
    pub decoder_hidden: Vec<usize>,
}

impl ModelShape {
    /// Dense reference architecture: 784→512→256→2·32, 32→512→784.
    pub fn desk() -> Self {
        Self { d: 784, d_z: 32, encoder_hidden: vec![512, 256], decoder_hidden: vec![512] }
    }

    /// Full-size configuration: d_z = 100, one 2000-unit decoder layer. The
    /// convolutional encoder is approximated by dense layers of similar
    /// depth ending in the 200-unit fully connected layer.
    pub fn full_size() -> Self {
        Self { d: 784, d_z: 100, encoder_hidden: vec![1024, 512, 200], decoder_hidden: vec![2000] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_z == 0 || self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid model shape {self:?}")));
        }
        Ok(())
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d];
        w.extend(&self.encoder_hidden);
        w.push(2 * self.d_z);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d_z];
        w.extend(&self.decoder_hidden);
        w.push(self.d);
        w
    }
}

/// The decoder's likelihood family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoderKind {
    /// Imaginary Gaussian noise `N(x | x̂(z), σ² I)`.
    Gaussian { sigma: f64 },
    /// Imaginary factorized Laplace noise with scale `α`.
    Laplace { alpha: f64 },
    /// Bernoulli likelihood on intensities (the vanilla VAE).
    Bernoulli,
}

/// Decoder family plus the KL weight `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderSpec {
    pub kind: DecoderKind,
    pub beta: f64,
}

impl DecoderSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self { kind: DecoderKind::Gaussian { sigma }, beta: 1.0 }
    }

    pub fn laplace(alpha: f64) -> Self {
        Self { kind: DecoderKind::Laplace { alpha }, beta: 1.0 }
    }

    pub fn bernoulli() -> Self {
        Self { kind: DecoderKind::Bernoulli, beta: 1.0 }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("beta", self.beta)?;
        match self.kind {
            DecoderKind::Gaussian { sigma } => positive("sigma", sigma),
            DecoderKind::Laplace { alpha } => positive("alpha", alpha),
            DecoderKind::Bernoulli => Ok(()),
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        match self.kind {
            DecoderKind::Gaussian { .. } if self.beta == 1.0 => ModelKind::SigmaVae,
            DecoderKind::Gaussian { .. } => ModelKind::BetaVae,
            DecoderKind::Laplace { .. } => ModelKind::AlphaVae,
            DecoderKind::Bernoulli => ModelKind::BernoulliVae,
        }
    }

    pub fn hyper(&self) -> Hyper {
        let (sigma, alpha) = match self.kind {
            DecoderKind::Gaussian { sigma } => (sigma, 0.0),
            DecoderKind::Laplace { alpha } => (0.0, alpha),
            DecoderKind::Bernoulli => (0.0, 0.0),
        };
        Hyper { sigma, alpha, beta: self.beta }
    }

    pub fn from_checkpoint(kind: ModelKind, hyper: &Hyper) -> Result<Self> {
        let spec = match kind {
            ModelKind::SigmaVae | ModelKind::BetaVae => Self::gaussian(hyper.sigma),
            ModelKind::AlphaVae => Self::laplace(hyper.alpha),
            ModelKind::BernoulliVae => Self::bernoulli(),
            ModelKind::Deen => {
                return Err(Error::WrongModelKind { expected: "a VAE", found: kind.name() })
            }
        }
        .with_beta(hyper.beta);
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DecoderKind::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma}")?,
            DecoderKind::Laplace { alpha } => write!(f, "laplace(alpha={alpha}")?,
            DecoderKind::Bernoulli => write!(f, "bernoulli(")?,
        }
        write!(f, ", beta={})", self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_roundtrip_through_hyper() {
        for spec in [
            DecoderSpec::gaussian(0.3),
            DecoderSpec::gaussian(0.3).with_beta(4.0),
            DecoderSpec::laplace(0.9).with_beta(2.0),
            DecoderSpec::bernoulli(),
        ] {
            let back = DecoderSpec::from_checkpoint(spec.model_kind(), &spec.hyper()).unwrap();
            assert_eq!(back, spec);
        }
        assert!(DecoderSpec::from_checkpoint(ModelKind::Deen, &DecoderSpec::bernoulli().hyper()).is_err());
    }

    #[test]
    fn validation() {
        assert!(DecoderSpec::gaussian(0.0).validate().is_err());
        assert!(DecoderSpec::laplace(-1.0).validate().is_err());
        assert!(DecoderSpec::bernoulli().with_beta(0.0).validate().is_err());
        assert!(ModelShape { d_z: 0, ..ModelShape::desk() }.validate().is_err());
        assert_eq!(ModelShape::desk().encoder_widths(), vec![784, 512, 256, 64]);
        assert_eq!(ModelShape::desk().decoder_widths(), vec![32, 512, 784]);
    }
}
