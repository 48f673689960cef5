//! Evaluation: test-set metrics, power-law fits, robustness grids, prior
//! samples and parameter sweeps.

mod powerlaw;
mod robustness;
mod sweep;

use ndarray::{s, Array2, ArrayView2};

use crate::dataio::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};
use crate::noise::RngStream;
use crate::vae::{kl_to_standard_normal, reparameterize, DecoderKind, DecoderSpec, PosteriorStats, VaeModel};

pub use powerlaw::{fit_power_law, PowerLawFit};
pub use robustness::{denoise, robustness_grid, sample_prior, GridOutput, RobustnessRow, BASELINE_ROW};
pub use sweep::{run_sweep, SweepKind, SweepOutput, SWEEP_HEADER};

/// Rows evaluated per forward pass.
const CHUNK: usize = 500;

/// Test-set averages for one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// σ or α of the decoder (0 for Bernoulli).
    pub param: f64,
    pub kl: f64,
    /// `E_q ‖x − x̂(z)‖²`.
    pub mse: f64,
    pub elbo: f64,
    /// `−kl / elbo`.
    pub ratio: f64,
}

impl SweepRow {
    pub fn new(param: f64, kl: f64, mse: f64, elbo: f64) -> Self {
        Self { param, kl, mse, elbo, ratio: -kl / elbo }
    }

    /// Row for a Gaussian decoder with β = 1 from reference KL and MSE
    /// averages: `elbo = −mse/(2σ²) − kl`.
    pub fn from_gaussian_averages(sigma: f64, kl: f64, mse: f64) -> Self {
        Self::new(sigma, kl, mse, -mse / (2.0 * sigma * sigma) - kl)
    }

    pub fn values(&self) -> Vec<f64> {
        vec![self.param, self.kl, self.mse, self.elbo, self.ratio]
    }
}

/// Anything that maps images to a factorized Gaussian posterior and latents
/// back to pixel means.
pub trait Autoencoder {
    fn encode(&self, x: ArrayView2<f32>) -> Result<PosteriorStats<f32>>;

    /// Pixel means in (0, 1).
    fn decode(&self, z: ArrayView2<f32>) -> Result<Array2<f32>>;

    /// Logits of the pixel means; only the Bernoulli metric needs them.
    fn decode_logits(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        Ok(self.decode(z)?.mapv(|p| (p / (1.0 - p)).ln()))
    }
}

impl Autoencoder for VaeModel<f32> {
    fn encode(&self, x: ArrayView2<f32>) -> Result<PosteriorStats<f32>> {
        VaeModel::encode(self, x)
    }

    fn decode(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        VaeModel::decode(self, z)
    }

    fn decode_logits(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
        VaeModel::decode_logits(self, z)
    }
}

fn decoder_param(spec: &DecoderSpec) -> f64 {
    match spec.kind {
        DecoderKind::Gaussian { sigma } => sigma,
        DecoderKind::Laplace { alpha } => alpha,
        DecoderKind::Bernoulli => 0.0,
    }
}

/// [`metrics_for`] on a VAE checkpoint.
pub fn metrics(ckpt: &Checkpoint, test: ArrayView2<f32>, stream: &mut RngStream, mc_samples: usize) -> Result<SweepRow> {
    if !ckpt.kind.is_vae() {
        return Err(Error::WrongModelKind { expected: "a VAE", found: ckpt.kind.name() });
    }
    let (model, spec) = VaeModel::<f32>::from_checkpoint(ckpt)?;
    metrics_for(&model, &spec, test, stream, mc_samples)
}

/// Test-set mean KL, reconstruction MSE and ELBO, with expectations over
/// the posterior estimated from `mc_samples` draws per example.
pub fn metrics_for(
    model: &impl Autoencoder,
    spec: &DecoderSpec,
    test: ArrayView2<f32>,
    stream: &mut RngStream,
    mc_samples: usize,
) -> Result<SweepRow> {
    spec.validate()?;
    if mc_samples == 0 {
        return Err(Error::EmptyRequest("mc_samples"));
    }
    let n = test.nrows();
    if n == 0 {
        return Err(Error::EmptyRequest("test set"));
    }
    let (mut kl_sum, mut mse_sum, mut recon_sum) = (0.0, 0.0, 0.0);
    for start in (0..n).step_by(CHUNK) {
        let x = test.slice(s![start..(start + CHUNK).min(n), ..]);
        let stats = model.encode(x)?;
        kl_sum += kl_to_standard_normal(&stats).sum();
        for _ in 0..mc_samples {
            let z = reparameterize(&stats, stream);
            let (sq, recon) = match spec.kind {
                DecoderKind::Bernoulli => {
                    let logits = model.decode_logits(z.view())?;
                    let mut sq = 0.0;
                    let mut bce = 0.0;
                    for (&l, &t) in logits.iter().zip(x.iter()) {
                        let (l, t) = (l as f64, (t as f64).clamp(0.0, 1.0));
                        sq += (t - sigmoid(l)).powi(2);
                        bce += softplus(l) - t * l;
                    }
                    (sq, bce)
                }
                _ => {
                    let xhat = model.decode(z.view())?;
                    let (mut sq, mut ab) = (0.0, 0.0);
                    for (&p, &t) in xhat.iter().zip(x.iter()) {
                        let r = t as f64 - p as f64;
                        sq += r * r;
                        ab += r.abs();
                    }
                    match spec.kind {
                        DecoderKind::Laplace { .. } => (sq, ab),
                        _ => (sq, sq),
                    }
                }
            };
            mse_sum += sq / mc_samples as f64;
            recon_sum += recon / mc_samples as f64;
        }
    }
    let (kl, mse, recon) = (kl_sum / n as f64, mse_sum / n as f64, recon_sum / n as f64);
    let weighted = match spec.kind {
        DecoderKind::Gaussian { sigma } => recon / (2.0 * sigma * sigma),
        DecoderKind::Laplace { alpha } => recon / alpha,
        DecoderKind::Bernoulli => recon,
    };
    Ok(SweepRow::new(decoder_param(spec), kl, mse, -weighted - spec.beta * kl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ModelKind, TrainingMeta};
    use crate::deen::EnergyModel;
    use crate::vae::{ModelShape, Schedule};

    /// `z = x` exactly and `x̂(z) = z`.
    struct Perfect;

    impl Autoencoder for Perfect {
        fn encode(&self, x: ArrayView2<f32>) -> Result<PosteriorStats<f32>> {
            Ok(PosteriorStats { mu: x.to_owned(), log_var: Array2::from_elem(x.raw_dim(), -80.0) })
        }

        fn decode(&self, z: ArrayView2<f32>) -> Result<Array2<f32>> {
            Ok(z.to_owned())
        }
    }

    fn unit(n: usize, d: usize, seed: u64) -> Array2<f32> {
        RngStream::new(seed, "data").uniform(n, d)
    }

    #[test]
    fn perfect_autoencoder_has_zero_mse() {
        let x = unit(7, 4, 1);
        let row = metrics_for(&Perfect, &DecoderSpec::gaussian(0.5), x.view(), &mut RngStream::new(1, "m"), 3).unwrap();
        assert_eq!(row.mse, 0.0);
        assert_eq!(row.param, 0.5);
    }

    #[test]
    fn collapsed_posterior_has_zero_kl() {
        let shape = ModelShape { d: 4, d_z: 2, encoder_hidden: vec![3], decoder_hidden: vec![3] };
        let mut m = VaeModel::<f32>::init(&shape, &mut RngStream::new(1, "init")).unwrap();
        for v in m.phi.values_mut() {
            v.fill(0.0);
        }
        let meta = TrainingMeta { seed: 0, epochs: 0, lr: 0.0, batch_size: 1 };
        let ckpt = m.to_checkpoint(&DecoderSpec::laplace(0.3), meta);
        let row = metrics(&ckpt, unit(5, 4, 2).view(), &mut RngStream::new(2, "m"), 1).unwrap();
        assert_eq!(row.kl, 0.0);
        assert!(row.mse > 0.0 && row.elbo < 0.0);
        assert_eq!(row.ratio, 0.0);
    }

    #[test]
    fn deen_checkpoint_is_rejected() {
        let e = EnergyModel::<f32>::init(4, &[3], 0.5, &mut RngStream::new(1, "init")).unwrap();
        let ckpt = e.to_checkpoint(&Schedule::default());
        assert_eq!(ckpt.kind, ModelKind::Deen);
        let err = metrics(&ckpt, unit(2, 4, 1).view(), &mut RngStream::new(1, "m"), 1);
        assert!(matches!(err, Err(Error::WrongModelKind { .. })));
    }

    #[test]
    fn ratio_from_reference_averages() {
        let row = SweepRow::from_gaussian_averages(0.5, 20.5, 10.6);
        assert!((row.elbo + 41.7).abs() < 1e-12);
        assert!((row.ratio - 20.5 / 41.7).abs() < 1e-12);
        assert!((row.ratio - 0.481).abs() < 0.045);
    }

    #[test]
    fn metrics_agree_with_model_elbo() {
        // With one draw and the same stream, the mean ELBO matches the
        // model's own single-sample estimate.
        let shape = ModelShape { d: 4, d_z: 2, encoder_hidden: vec![3], decoder_hidden: vec![3] };
        let m = VaeModel::<f32>::init(&shape, &mut RngStream::new(3, "init")).unwrap();
        let x = unit(6, 4, 4);
        for spec in [DecoderSpec::gaussian(0.4).with_beta(2.0), DecoderSpec::laplace(0.7), DecoderSpec::bernoulli()] {
            let row = metrics_for(&m, &spec, x.view(), &mut RngStream::new(5, "m"), 1).unwrap();
            let want = m.elbo(x.view(), &spec, &mut RngStream::new(5, "m")).unwrap();
            assert!((row.elbo - want.mean_elbo()).abs() < 1e-4 * want.mean_elbo().abs(), "{spec}");
            assert!((row.kl - want.mean_kl()).abs() < 1e-5);
        }
    }

    #[test]
    fn mse_standard_error_shrinks_with_samples() {
        let shape = ModelShape { d: 4, d_z: 2, encoder_hidden: vec![3], decoder_hidden: vec![3] };
        let mut m = VaeModel::<f32>::init(&shape, &mut RngStream::new(6, "init")).unwrap();
        // Wide posterior so the draws matter.
        for v in m.phi.values_mut() {
            v.fill(0.0);
        }
        for v in m.theta.values_mut() {
            v.mapv_inplace(|w| 3.0 * w);
        }
        let x = unit(1, 4, 7);
        let spread = |k: usize| {
            let vals: Vec<f64> = (0..200)
                .map(|r| {
                    let mut s = RngStream::new(r, "mc");
                    metrics_for(&m, &DecoderSpec::gaussian(0.5), x.view(), &mut s, k).unwrap().mse
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        };
        let (s1, s16, s256) = (spread(1), spread(16), spread(256));
        for ratio in [s1 / s16, s16 / s256] {
            assert!((3.0..5.3).contains(&ratio), "{s1} {s16} {s256}");
        }
    }
}
