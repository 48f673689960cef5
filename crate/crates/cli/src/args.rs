use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ivae", version, about = "Imaginary-noise VAEs, DEEN denoising and their diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a VAE or a DEEN energy model on the training split
    Train(TrainArgs),
    /// Test-set KL, reconstruction MSE, ELBO and ratio of a VAE checkpoint
    Eval(EvalArgs),
    /// Corrupt test images and write them as a PGM grid
    Corrupt(CorruptArgs),
    /// Corrupt test images and denoise them with one or more checkpoints
    Denoise(DenoiseArgs),
    /// Train one model per grid value and fit the KL power law
    Sweep(SweepArgs),
    /// Fit ln kl = C - nu ln param on the `param` and `kl` columns of a CSV
    FitPowerlaw(FitArgs),
    /// Verify the scale/beta equivalence of two decoder settings
    CheckEquivalence(EquivalenceArgs),
    /// Decode draws from the prior into a PGM grid
    Sample(SampleArgs),
    /// Compare every analytic gradient with finite differences
    Gradcheck(GradcheckArgs),
    /// Write a procedurally generated digit set in MNIST IDX format
    SynthData(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Sigma,
    Alpha,
    Beta,
    Bernoulli,
    Deen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseKind {
    Gaussian,
    Laplace,
    Saltpepper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepChoice {
    Gaussian,
    Laplace,
}

#[derive(Debug, Args)]
pub struct Optimization {
    /// Training epochs
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Master seed for initialization, shuffling and sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct Architecture {
    /// Latent dimension [default: 32, or 100 with --paper-arch]
    #[arg(long)]
    pub dz: Option<usize>,
    /// Use the wide reference sizes (latent 100, decoder hidden 2000) with a dense encoder
    #[arg(long, default_value_t = false)]
    pub paper_arch: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model family
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    /// Gaussian decoder scale (sigma, beta) or DEEN noise scale (deen)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Laplace decoder scale
    #[arg(long)]
    pub alpha: Option<f64>,
    /// KL weight
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[command(flatten)]
    pub arch: Architecture,
    #[command(flatten)]
    pub opt: Optimization,
    /// Directory holding the MNIST IDX files
    #[arg(long)]
    pub data: PathBuf,
    /// Train on the first N images only [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// VAE checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory holding the MNIST IDX files
    #[arg(long)]
    pub data: PathBuf,
    /// Posterior draws per test image for the MSE
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    /// Seed of the reparameterization draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate the first N test images only [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Corruption {
    /// Corruption process
    #[arg(long, value_enum)]
    pub kind: NoiseKind,
    /// sigma (gaussian), alpha (laplace) or p (saltpepper)
    #[arg(long)]
    pub param: f64,
    /// Directory holding the MNIST IDX files
    #[arg(long)]
    pub data: PathBuf,
    /// Test-image indices: comma-separated values or inclusive ranges a-b
    #[arg(long, default_value = "0-49")]
    pub indices: String,
    /// Seed of the corruption and reconstruction draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Images per grid row
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub noise: Corruption,
    /// Output PGM
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Comma-separated checkpoints (VAE or DEEN)
    #[arg(long)]
    pub ckpt: String,
    #[command(flatten)]
    pub noise: Corruption,
    /// Noise scale used by DEEN's estimator [default: the training sigma]
    #[arg(long)]
    pub deen_sigma: Option<f64>,
    /// Output directory for grids and robustness.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Decoder family to sweep
    #[arg(long, value_enum)]
    pub kind: SweepChoice,
    /// Comma-separated decoder scales
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub grid: String,
    /// Directory holding the MNIST IDX files
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub arch: Architecture,
    #[command(flatten)]
    pub opt: Optimization,
    /// Train on the first N images only [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
    /// Evaluate on the first N test images only [default: all]
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Posterior draws per test image for the MSE
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    /// Output directory for checkpoints, sweep.csv and fit.txt
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with `param` and `kl` columns
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Report path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EquivalenceArgs {
    /// 1: Gaussian scales sigma1, sigma2; 2: Laplace scales alpha1, alpha2
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub theorem: u8,
    /// First scale
    #[arg(long)]
    pub p1: f64,
    /// Second scale
    #[arg(long)]
    pub p2: f64,
    /// Random parameter, data and noise draws
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub arch: Architecture,
    /// Also write the report as a CSV row
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// VAE checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Number of samples
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Seed of the prior draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Images per grid row
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Output PGM
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Wider networks and larger batches
    #[arg(long, default_value_t = false)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Training images
    #[arg(long, default_value_t = 60000)]
    pub n_train: usize,
    /// Test images
    #[arg(long, default_value_t = 10000)]
    pub n_test: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
