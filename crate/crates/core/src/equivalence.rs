//! Numerical certificates for the scale/β equivalences of the Gaussian and
//! Laplace imaginary-noise ELBOs.
//!
//! Two objectives `L_a`, `L_b` are equivalent when `L_a = C₁·L_b + C₂` with
//! `C₁ > 0`. Both sides are evaluated in 64-bit with identical parameters,
//! data and reparameterization noise, so the identity must hold to rounding.

use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::noise::RngStream;
use crate::vae::{DecoderKind, DecoderSpec, ModelShape, VaeGrads, VaeModel};

/// Examples evaluated per trial.
const BATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub beta: f64,
    pub c1: f64,
    /// Always 0: both objectives drop their additive constants.
    pub c2: f64,
    /// `max |L_a − C₁·L_b − C₂|` over examples and trials.
    pub max_abs_residual: f64,
    /// `max |∇L_a − C₁·∇L_b|` over every parameter entry and trial.
    pub max_grad_residual: f64,
    /// `max |∇L_a/‖∇L_a‖ − ∇L_b/‖∇L_b‖|` entrywise.
    pub max_direction_residual: f64,
    pub trials: usize,
}

impl EquivalenceReport {
    pub const CSV_HEADER: &'static str = "beta,c1,c2,max_abs_residual,max_grad_residual,max_direction_residual,trials";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.beta,
            self.c1,
            self.c2,
            self.max_abs_residual,
            self.max_grad_residual,
            self.max_direction_residual,
            self.trials
        )
    }
}

/// Ten decimals with trailing zeros removed, so 80.99999999999999 prints
/// as 81.
fn rounded(v: f64) -> String {
    let s = format!("{v:.10}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "beta={}", rounded(self.beta))?;
        writeln!(f, "c1={:.6}", self.c1)?;
        writeln!(f, "c2={}", self.c2)?;
        writeln!(f, "max_abs_residual={:e}", self.max_abs_residual)?;
        writeln!(f, "max_grad_residual={:e}", self.max_grad_residual)?;
        writeln!(f, "max_direction_residual={:e}", self.max_direction_residual)?;
        write!(f, "trials={}", self.trials)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

/// `L(σ₂) = (σ₁/σ₂)²·L(σ₁, β = σ₂²/σ₁²)`.
pub fn check_theorem1(
    sigma1: f64,
    sigma2: f64,
    shape: &ModelShape,
    trials: usize,
    stream: &RngStream,
) -> Result<EquivalenceReport> {
    positive("sigma1", sigma1)?;
    positive("sigma2", sigma2)?;
    let beta = (sigma2 * sigma2) / (sigma1 * sigma1);
    let c1 = (sigma1 / sigma2).powi(2);
    let mut report = check_equivalent(
        &DecoderSpec::gaussian(sigma2),
        &DecoderSpec::gaussian(sigma1).with_beta(beta),
        c1,
        shape,
        trials,
        stream,
    )?;
    report.beta = beta;
    Ok(report)
}

/// `L(α₂) = (α₁/α₂)·L(α₁, β = α₂/α₁)`.
pub fn check_theorem2(
    alpha1: f64,
    alpha2: f64,
    shape: &ModelShape,
    trials: usize,
    stream: &RngStream,
) -> Result<EquivalenceReport> {
    positive("alpha1", alpha1)?;
    positive("alpha2", alpha2)?;
    let beta = alpha2 / alpha1;
    let mut report = check_equivalent(
        &DecoderSpec::laplace(alpha2),
        &DecoderSpec::laplace(alpha1).with_beta(beta),
        alpha1 / alpha2,
        shape,
        trials,
        stream,
    )?;
    report.beta = beta;
    Ok(report)
}

/// Rewrites a β-weighted Gaussian or Laplace spec as an equivalent spec with
/// β = 1 (`σ' = σ√β`, `α' = α·β`); the objectives then differ by the factor
/// `1/β`.
pub fn absorb_beta(spec: &DecoderSpec) -> Result<DecoderSpec> {
    spec.validate()?;
    match spec.kind {
        DecoderKind::Gaussian { sigma } => Ok(DecoderSpec::gaussian(sigma * spec.beta.sqrt())),
        DecoderKind::Laplace { alpha } => Ok(DecoderSpec::laplace(alpha * spec.beta)),
        DecoderKind::Bernoulli => Err(Error::UnsupportedKind("bernoulli")),
    }
}

/// Redraws every parameter in place. Weights are He-uniform (variance
/// 2/fan_in) times a per-array factor from Unif(0.5, 1.5); biases are
/// N(0, 0.1²) times the same kind of factor.
fn redraw(model: &mut VaeModel<f64>, rng: &mut RngStream) {
    for v in model.phi.values_mut().chain(model.theta.values_mut()) {
        let factor = 0.5 + rng.next_uniform();
        if v.nrows() == 1 {
            v.mapv_inplace(|_| 0.1 * factor * rng.next_gauss());
        } else {
            let bound = factor * (6.0 / v.nrows() as f64).sqrt();
            v.mapv_inplace(|_| bound * (2.0 * rng.next_uniform() - 1.0));
        }
    }
}

fn entries(g: &VaeGrads<f64>) -> impl Iterator<Item = f64> + '_ {
    g.phi.iter().chain(g.theta.iter()).flat_map(|(_, v)| v.iter().copied())
}

fn norm_or_one(g: &VaeGrads<f64>) -> f64 {
    let n = entries(g).map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 { 1.0 } else { n }
}

/// Checks `L_a = c1·L_b` (and the matching gradient identity) over `trials`
/// random draws of parameters, data in [0, 1] and shared latent noise. Trial
/// `t` uses the stream derived with `"trial/{t}"`.
pub fn check_equivalent(
    a: &DecoderSpec,
    b: &DecoderSpec,
    c1: f64,
    shape: &ModelShape,
    trials: usize,
    stream: &RngStream,
) -> Result<EquivalenceReport> {
    a.validate()?;
    b.validate()?;
    shape.validate()?;
    positive("c1", c1)?;
    if trials == 0 {
        return Err(Error::EmptyRequest("trials"));
    }
    let mut report = EquivalenceReport {
        beta: b.beta,
        c1,
        c2: 0.0,
        max_abs_residual: 0.0,
        max_grad_residual: 0.0,
        max_direction_residual: 0.0,
        trials,
    };
    let mut model = VaeModel::<f64>::init(shape, &mut stream.derive("template"))?;
    for t in 0..trials {
        let mut rng = stream.derive(&format!("trial/{t}"));
        redraw(&mut model, &mut rng);
        let x: Array2<f64> = rng.uniform(BATCH, shape.d);
        let eps: Array2<f64> = rng.gauss(BATCH, shape.d_z);
        let (la, ga) = model.loss_and_grads(x.view(), x.view(), a, eps.view())?;
        let (lb, gb) = model.loss_and_grads(x.view(), x.view(), b, eps.view())?;
        for (ta, tb) in la.terms.iter().zip(&lb.terms) {
            let r = (ta.elbo - c1 * tb.elbo - report.c2).abs();
            report.max_abs_residual = report.max_abs_residual.max(r);
        }
        let (na, nb) = (norm_or_one(&ga), norm_or_one(&gb));
        for (x, y) in entries(&ga).zip(entries(&gb)) {
            report.max_grad_residual = report.max_grad_residual.max((x - c1 * y).abs());
            report.max_direction_residual =
                report.max_direction_residual.max((x / na - y / nb).abs());
        }
    }
    Ok(report)
}
