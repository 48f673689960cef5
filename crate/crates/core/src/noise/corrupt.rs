use std::fmt;

use super::RngStream;
use crate::dataio::ImageBatch;
use crate::error::{Error, Result};

/// A pixel-wise corruption process with a symmetric kernel, `E[y | x] = x`
/// for the additive kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptorSpec {
    /// `y = x + N(0, σ²)` per pixel.
    Gaussian { sigma: f64 },
    /// `y = x + Laplace(0, α)` per pixel.
    Laplace { alpha: f64 },
    /// Each pixel replaced with probability `p` by 0 or 1 (equally likely).
    SaltPepper { p: f64 },
}

impl CorruptorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorruptorSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma must be ≥ 0, got {sigma}")),
            ),
            CorruptorSpec::Laplace { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                Error::InvalidParameter(format!("laplace alpha must be > 0, got {alpha}")),
            ),
            CorruptorSpec::SaltPepper { p } if !(0.0..=1.0).contains(&p) => Err(
                Error::InvalidParameter(format!("salt-and-pepper p must lie in [0, 1], got {p}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            CorruptorSpec::Gaussian { sigma } => sigma,
            CorruptorSpec::Laplace { alpha } => alpha,
            CorruptorSpec::SaltPepper { p } => p,
        }
    }
}

impl fmt::Display for CorruptorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CorruptorSpec::Gaussian { sigma } => write!(f, "gaussian({sigma})"),
            CorruptorSpec::Laplace { alpha } => write!(f, "laplace({alpha})"),
            CorruptorSpec::SaltPepper { p } => write!(f, "saltpepper({p})"),
        }
    }
}

/// Returns a corrupted copy of `batch`. Additive noise is never clamped.
pub fn corrupt(batch: &ImageBatch, spec: &CorruptorSpec, stream: &mut RngStream) -> Result<ImageBatch> {
    spec.validate()?;
    let mut data = batch.data().to_owned();
    match *spec {
        CorruptorSpec::Gaussian { sigma } => {
            if sigma > 0.0 {
                data.mapv_inplace(|x| x + (sigma * stream.next_gauss()) as f32);
            }
        }
        CorruptorSpec::Laplace { alpha } => {
            data.mapv_inplace(|x| x + stream.next_laplace(alpha) as f32);
        }
        CorruptorSpec::SaltPepper { p } => {
            data.mapv_inplace(|x| {
                if stream.next_uniform() < p {
                    if stream.next_uniform() < 0.5 { 0.0 } else { 1.0 }
                } else {
                    x
                }
            });
        }
    }
    ImageBatch::new(data, batch.side())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn clean(n: usize, seed: u64) -> ImageBatch {
        let mut s = RngStream::new(seed, "clean");
        ImageBatch::new(s.uniform::<f32>(n, 784), 28).unwrap()
    }

    fn diffs(a: &ImageBatch, b: &ImageBatch) -> Vec<f64> {
        a.data().iter().zip(b.data().iter()).map(|(&y, &x)| (y - x) as f64).collect()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let x = clean(3, 1);
        let y = corrupt(&x, &CorruptorSpec::Gaussian { sigma: 0.0 }, &mut RngStream::new(1, "c")).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn full_salt_pepper_is_binary() {
        let x = clean(3, 1);
        let y = corrupt(&x, &CorruptorSpec::SaltPepper { p: 1.0 }, &mut RngStream::new(1, "c")).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let frac_one = y.data().iter().filter(|&&v| v == 1.0).count() as f64 / y.data().len() as f64;
        assert!((frac_one - 0.5).abs() < 0.03);
    }

    #[test]
    fn zero_salt_pepper_is_identity() {
        let x = clean(2, 1);
        let y = corrupt(&x, &CorruptorSpec::SaltPepper { p: 0.0 }, &mut RngStream::new(1, "c")).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn gaussian_empirical_variance() {
        let x = clean(128, 2); // 100 352 pixels
        let y = corrupt(&x, &CorruptorSpec::Gaussian { sigma: 0.9 }, &mut RngStream::new(2, "c")).unwrap();
        let d = diffs(&y, &x);
        let msq = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((msq - 0.81).abs() < 0.02, "{msq}");
        // No clamping: values escape [0, 1].
        assert!(y.data().iter().any(|&v| !(0.0..=1.0).contains(&v)));
    }

    #[test]
    fn unbiased_for_all_kernels() {
        // E[y − x] = 0 within 4 standard errors. For salt-and-pepper this
        // holds against pixels at 0.5, the midpoint of the replacement values.
        let half = ImageBatch::new(Array2::from_elem((128, 784), 0.5), 28).unwrap();
        for (spec, x) in [
            (CorruptorSpec::Gaussian { sigma: 0.9 }, clean(128, 3)),
            (CorruptorSpec::Laplace { alpha: 0.4 }, clean(128, 3)),
            (CorruptorSpec::SaltPepper { p: 0.5 }, half),
        ] {
            let y = corrupt(&x, &spec, &mut RngStream::new(4, "c")).unwrap();
            let d = diffs(&y, &x);
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(mean.abs() < 4.0 * sd / n.sqrt(), "{spec}: mean {mean}");
        }
    }

    #[test]
    fn gaussian_norm_concentrates() {
        let x = ImageBatch::new(Array2::zeros((10_000, 784)), 28).unwrap();
        let y = corrupt(&x, &CorruptorSpec::Gaussian { sigma: 0.9 }, &mut RngStream::new(5, "c")).unwrap();
        let mean_norm = y
            .data()
            .outer_iter()
            .map(|r| r.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / 10_000.0;
        let expect = 0.9 * 784f64.sqrt();
        assert!((mean_norm / expect - 1.0).abs() < 0.02, "{mean_norm} vs {expect}");
    }

    #[test]
    fn input_untouched_and_params_validated() {
        let x = clean(2, 6);
        let before = x.clone();
        let _ = corrupt(&x, &CorruptorSpec::Laplace { alpha: 0.4 }, &mut RngStream::new(1, "c")).unwrap();
        assert_eq!(x, before);
        for bad in [
            CorruptorSpec::Gaussian { sigma: -0.1 },
            CorruptorSpec::Laplace { alpha: 0.0 },
            CorruptorSpec::SaltPepper { p: 1.5 },
        ] {
            assert!(corrupt(&x, &bad, &mut RngStream::new(1, "c")).is_err());
        }
    }
}
