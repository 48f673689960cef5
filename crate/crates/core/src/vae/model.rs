use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{DecoderKind, DecoderSpec, ModelShape};
use crate::dataio::{Checkpoint, ImageBatch, NetShape, TrainingMeta};
use crate::error::{Error, Result};
use crate::nn::{Mlp, ParamStore, Tape, Var};
use crate::noise::RngStream;
use crate::real::Real;

/// Factorized Gaussian posterior parameters, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats<T> {
    pub mu: Array2<T>,
    pub log_var: Array2<T>,
}

/// ELBO decomposition for one example. Additive normalizing constants of
/// the decoder likelihood are dropped throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `‖x − x̂‖²`, `Σ|x − x̂|`, or the binary cross-entropy, by decoder kind.
    pub recon: f64,
    /// The reconstruction term as it enters the objective (`recon / 2σ²`,
    /// `recon / α`, or `recon`).
    pub weighted_recon: f64,
    pub kl: f64,
    /// `−weighted_recon − β·kl`.
    pub elbo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboBatch {
    pub terms: Vec<ElboTerms>,
}

impl ElboBatch {
    fn mean_of(&self, f: impl Fn(&ElboTerms) -> f64) -> f64 {
        self.terms.iter().map(f).sum::<f64>() / self.terms.len() as f64
    }

    pub fn mean_elbo(&self) -> f64 {
        self.mean_of(|t| t.elbo)
    }

    pub fn mean_kl(&self) -> f64 {
        self.mean_of(|t| t.kl)
    }

    pub fn mean_recon(&self) -> f64 {
        self.mean_of(|t| t.recon)
    }

    pub fn elbos(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.elbo).collect()
    }
}

/// Gradients of the mean negative ELBO.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads<T> {
    pub phi: ParamStore<T>,
    pub theta: ParamStore<T>,
}

/// Encoder parameters `phi`, decoder parameters `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<T> {
    shape: ModelShape,
    encoder: Mlp,
    decoder: Mlp,
    pub phi: ParamStore<T>,
    pub theta: ParamStore<T>,
}

struct ElboNodes {
    recon: Var,
    weighted: Var,
    kl: Var,
    neg_elbo: Var,
    loss: Var,
}

fn nets(shape: &ModelShape) -> Result<(Mlp, Mlp)> {
    shape.validate()?;
    Ok((
        Mlp::new("encoder", &shape.encoder_widths())?,
        Mlp::new("decoder", &shape.decoder_widths())?,
    ))
}

fn column(v: &Array2<impl Real>) -> Vec<f64> {
    v.column(0).iter().map(|x| x.as_f64()).collect()
}

impl<T: Real> VaeModel<T> {
    /// He-initialized model.
    pub fn init(shape: &ModelShape, rng: &mut RngStream) -> Result<Self> {
        let (encoder, decoder) = nets(shape)?;
        let mut phi = ParamStore::new();
        let mut theta = ParamStore::new();
        encoder.init(&mut phi, rng)?;
        decoder.init(&mut theta, rng)?;
        Ok(Self { shape: shape.clone(), encoder, decoder, phi, theta })
    }

    pub fn from_params(shape: &ModelShape, phi: ParamStore<T>, theta: ParamStore<T>) -> Result<Self> {
        let (encoder, decoder) = nets(shape)?;
        encoder.layer_ids(&phi)?;
        decoder.layer_ids(&theta)?;
        Ok(Self { shape: shape.clone(), encoder, decoder, phi, theta })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn cast<U: Real>(&self) -> VaeModel<U> {
        VaeModel {
            shape: self.shape.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            phi: self.phi.cast(),
            theta: self.theta.cast(),
        }
    }

    fn check_width(&self, x: &ArrayView2<T>, want: usize, what: &str) -> Result<()> {
        if x.ncols() != want {
            return Err(Error::ShapeMismatch(format!(
                "{what} width {}, expected {want}",
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: ArrayView2<T>) -> Result<PosteriorStats<T>> {
        self.check_width(&x, self.shape.d, "encoder input")?;
        let mut tape = Tape::new();
        let slot = tape.bind();
        let xin = tape.constant(x.to_owned());
        let trace = self.encoder.forward(&mut tape, slot, &self.phi, xin)?;
        let out = tape.value(trace.output);
        let dz = self.shape.d_z;
        Ok(PosteriorStats {
            mu: out.slice(ndarray::s![.., ..dz]).to_owned(),
            log_var: out.slice(ndarray::s![.., dz..]).to_owned(),
        })
    }

    /// Decoder logits before the logistic readout.
    pub fn decode_logits(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_width(&z, self.shape.d_z, "latent")?;
        let mut tape = Tape::new();
        let slot = tape.bind();
        let zin = tape.constant(z.to_owned());
        let trace = self.decoder.forward(&mut tape, slot, &self.theta, zin)?;
        Ok(tape.value(trace.output).clone())
    }

    /// Decoder mean `x̂(z) ∈ (0, 1)^d`.
    pub fn decode(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.decode_logits(z)?.mapv(crate::nn::sigmoid))
    }

    #[allow(clippy::too_many_arguments)]
    fn record_elbo(
        &self,
        tape: &mut Tape<T>,
        input: ArrayView2<T>,
        target: ArrayView2<T>,
        spec: &DecoderSpec,
        eps: ArrayView2<T>,
    ) -> Result<(ElboNodes, crate::nn::Slot, crate::nn::Slot)> {
        spec.validate()?;
        let n = input.nrows();
        let dz = self.shape.d_z;
        self.check_width(&input, self.shape.d, "encoder input")?;
        if target.dim() != input.dim() {
            return Err(Error::ShapeMismatch(format!(
                "target {:?} vs input {:?}",
                target.dim(),
                input.dim()
            )));
        }
        if eps.dim() != (n, dz) {
            return Err(Error::ShapeMismatch(format!(
                "noise {:?}, expected {:?}",
                eps.dim(),
                (n, dz)
            )));
        }
        let sp = tape.bind();
        let st = tape.bind();
        let x = tape.constant(input.to_owned());
        let enc = self.encoder.forward(tape, sp, &self.phi, x)?;
        let mu = tape.slice_cols(enc.output, 0, dz);
        let log_var = tape.slice_cols(enc.output, dz, 2 * dz);

        let half = tape.affine(log_var, T::cast(0.5), T::zero());
        let std = tape.exp(half);
        let e = tape.constant(eps.to_owned());
        let spread = tape.mul(std, e);
        let z = tape.add(mu, spread);

        let dec = self.decoder.forward(tape, st, &self.theta, z)?;
        let logits = dec.output;
        let tgt = tape.constant(target.to_owned());
        let (recon, scale) = match spec.kind {
            DecoderKind::Gaussian { sigma } => {
                let xhat = tape.sigmoid(logits);
                let diff = tape.sub(tgt, xhat);
                let sq = tape.square(diff);
                (tape.sum_rows(sq), 1.0 / (2.0 * sigma * sigma))
            }
            DecoderKind::Laplace { alpha } => {
                let xhat = tape.sigmoid(logits);
                let diff = tape.sub(tgt, xhat);
                let ab = tape.abs(diff);
                (tape.sum_rows(ab), 1.0 / alpha)
            }
            DecoderKind::Bernoulli => {
                // −[x ln σ(l) + (1 − x) ln(1 − σ(l))] = softplus(l) − x·l
                let sp = tape.softplus(logits);
                let xl = tape.mul(tgt, logits);
                let bce = tape.sub(sp, xl);
                (tape.sum_rows(bce), 1.0)
            }
        };
        let weighted = tape.affine(recon, T::cast(scale), T::zero());

        let mu2 = tape.square(mu);
        let var = tape.exp(log_var);
        let s = tape.add(mu2, var);
        let s = tape.sub(s, log_var);
        let s = tape.sum_rows(s);
        let kl = tape.affine(s, T::cast(0.5), T::cast(-0.5 * dz as f64));

        let beta_kl = tape.affine(kl, T::cast(spec.beta), T::zero());
        let neg_elbo = tape.add(weighted, beta_kl);
        let total = tape.sum_all(neg_elbo);
        let loss = tape.affine(total, T::cast(1.0 / n as f64), T::zero());
        Ok((ElboNodes { recon, weighted, kl, neg_elbo, loss }, sp, st))
    }

    fn collect(tape: &Tape<T>, nodes: &ElboNodes) -> ElboBatch {
        let recon = column(tape.value(nodes.recon));
        let weighted = column(tape.value(nodes.weighted));
        let kl = column(tape.value(nodes.kl));
        let neg = column(tape.value(nodes.neg_elbo));
        ElboBatch {
            terms: (0..recon.len())
                .map(|i| ElboTerms {
                    recon: recon[i],
                    weighted_recon: weighted[i],
                    kl: kl[i],
                    elbo: -neg[i],
                })
                .collect(),
        }
    }

    /// ELBO with explicit reparameterization noise `eps` (`n × d_z`), encoding
    /// `input` and scoring the reconstruction against `target`.
    pub fn elbo_with_noise(
        &self,
        input: ArrayView2<T>,
        target: ArrayView2<T>,
        spec: &DecoderSpec,
        eps: ArrayView2<T>,
    ) -> Result<ElboBatch> {
        let mut tape = Tape::new();
        let (nodes, _, _) = self.record_elbo(&mut tape, input, target, spec, eps)?;
        Ok(Self::collect(&tape, &nodes))
    }

    /// Single-sample Monte Carlo ELBO of `x`. Bernoulli targets must lie in
    /// [0, 1].
    pub fn elbo(&self, x: ArrayView2<T>, spec: &DecoderSpec, stream: &mut RngStream) -> Result<ElboBatch> {
        if spec.kind == DecoderKind::Bernoulli {
            check_unit_interval(&x)?;
        }
        let eps = stream.gauss::<T>(x.nrows(), self.shape.d_z);
        self.elbo_with_noise(x, x, spec, eps.view())
    }

    /// ELBO for a (possibly corrupted) `input` scored against `target`.
    /// Bernoulli targets are clamped to [0, 1]; the encoder input never is.
    pub fn elbo_eval(
        &self,
        input: ArrayView2<T>,
        target: ArrayView2<T>,
        spec: &DecoderSpec,
        stream: &mut RngStream,
    ) -> Result<ElboBatch> {
        let eps = stream.gauss::<T>(input.nrows(), self.shape.d_z);
        if spec.kind == DecoderKind::Bernoulli {
            let clamped = target.mapv(|v| v.max(T::zero()).min(T::one()));
            self.elbo_with_noise(input, clamped.view(), spec, eps.view())
        } else {
            self.elbo_with_noise(input, target, spec, eps.view())
        }
    }

    /// Per-example terms and gradients of the mean negative ELBO.
    pub fn loss_and_grads(
        &self,
        input: ArrayView2<T>,
        target: ArrayView2<T>,
        spec: &DecoderSpec,
        eps: ArrayView2<T>,
    ) -> Result<(ElboBatch, VaeGrads<T>)> {
        let mut tape = Tape::new();
        let (nodes, sp, st) = self.record_elbo(&mut tape, input, target, spec, eps)?;
        let batch = Self::collect(&tape, &nodes);
        let mut grads = tape.backward(nodes.loss, Array2::ones((1, 1)).view())?;
        Ok((
            batch,
            VaeGrads { phi: grads.take_store(sp, &self.phi), theta: grads.take_store(st, &self.theta) },
        ))
    }

    /// Packs the model into a checkpoint (parameters stored as f32).
    pub fn to_checkpoint(&self, spec: &DecoderSpec, meta: TrainingMeta) -> Checkpoint {
        let mut params = self.phi.cast::<f32>();
        params
            .extend(&self.theta.cast::<f32>())
            .expect("encoder and decoder names are disjoint");
        Checkpoint {
            kind: spec.model_kind(),
            hyper: spec.hyper(),
            shape: NetShape {
                d: self.shape.d,
                d_z: self.shape.d_z,
                encoder_hidden: self.shape.encoder_hidden.clone(),
                decoder_hidden: self.shape.decoder_hidden.clone(),
            },
            params,
            meta,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, DecoderSpec)> {
        let spec = DecoderSpec::from_checkpoint(ckpt.kind, &ckpt.hyper)?;
        let shape = ModelShape {
            d: ckpt.shape.d,
            d_z: ckpt.shape.d_z,
            encoder_hidden: ckpt.shape.encoder_hidden.clone(),
            decoder_hidden: ckpt.shape.decoder_hidden.clone(),
        };
        let phi = ckpt.params.filter_prefix("encoder.").cast();
        let theta = ckpt.params.filter_prefix("decoder.").cast();
        Ok((Self::from_params(&shape, phi, theta)?, spec))
    }
}

fn check_unit_interval<T: Real>(x: &ArrayView2<T>) -> Result<()> {
    match x.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        Some(v) => Err(Error::BernoulliTargetOutOfRange { value: v.as_f64() }),
        None => Ok(()),
    }
}

pub(crate) fn check_bernoulli_targets(x: ArrayView2<f32>) -> Result<()> {
    check_unit_interval(&x)
}

/// `z = μ + exp(log_var / 2) ⊙ ε`, `ε ~ N(0, I)`.
pub fn reparameterize<T: Real>(stats: &PosteriorStats<T>, stream: &mut RngStream) -> Array2<T> {
    let (n, dz) = stats.mu.dim();
    let eps = stream.gauss::<T>(n, dz);
    let half = T::cast(0.5);
    &stats.mu + &(stats.log_var.mapv(|lv| (lv * half).exp()) * eps)
}

/// Closed-form `KL(N(μ, s²) ‖ N(0, I))` per example.
pub fn kl_to_standard_normal<T: Real>(stats: &PosteriorStats<T>) -> Array1<f64> {
    let terms = ndarray::Zip::from(&stats.mu)
        .and(&stats.log_var)
        .map_collect(|&m, &lv| {
            let (m, lv) = (m.as_f64(), lv.as_f64());
            m * m + lv.exp() - 1.0 - lv
        });
    terms.sum_axis(Axis(1)) * 0.5
}

/// Encode → sample → decode on a possibly corrupted batch.
pub fn reconstruct(ckpt: &Checkpoint, y: &ImageBatch, stream: &mut RngStream) -> Result<ImageBatch> {
    let (model, _) = VaeModel::<f32>::from_checkpoint(ckpt)?;
    let stats = model.encode(y.data())?;
    let z = reparameterize(&stats, stream);
    ImageBatch::new(model.decode(z.view())?, y.side())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use ndarray::{array, Array2};

    fn tiny_shape() -> ModelShape {
        ModelShape { d: 6, d_z: 2, encoder_hidden: vec![5], decoder_hidden: vec![4] }
    }

    fn tiny_model(seed: u64) -> VaeModel<f64> {
        let mut rng = RngStream::new(seed, "init");
        let mut m = VaeModel::<f64>::init(&tiny_shape(), &mut rng).unwrap();
        for store in [&mut m.phi, &mut m.theta] {
            for v in store.values_mut() {
                if v.nrows() == 1 {
                    v.mapv_inplace(|_| 0.2 * rng.next_gauss());
                }
            }
        }
        m
    }

    fn unit_data(n: usize, d: usize, seed: u64) -> Array2<f64> {
        RngStream::new(seed, "data").uniform(n, d)
    }

    fn stats(mu: Array2<f64>, log_var: Array2<f64>) -> PosteriorStats<f64> {
        PosteriorStats { mu, log_var }
    }

    #[test]
    fn zero_weights_give_prior_posterior_and_half_means() {
        let mut m = tiny_model(1);
        for store in [&mut m.phi, &mut m.theta] {
            for v in store.values_mut() {
                v.fill(0.0);
            }
        }
        let x = unit_data(3, 6, 2) * 7.0 - 3.0;
        let s = m.encode(x.view()).unwrap();
        assert_eq!(s.mu.dim(), (3, 2));
        assert!(s.mu.iter().chain(s.log_var.iter()).all(|&v| v == 0.0));
        let xhat = m.decode(Array2::ones((2, 2)).view()).unwrap();
        assert!(xhat.iter().all(|&v| v == 0.5));
        assert!(kl_to_standard_normal(&s).iter().all(|&k| k == 0.0));
    }

    #[test]
    fn encode_and_decode_reject_bad_widths() {
        let m = tiny_model(1);
        assert!(matches!(m.encode(Array2::zeros((1, 5)).view()), Err(Error::ShapeMismatch(_))));
        assert!(matches!(m.decode(Array2::zeros((1, 3)).view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn kl_closed_form_examples() {
        let k = kl_to_standard_normal(&stats(array![[0.0], [1.0], [0.0]], array![[0.0], [0.0], [4f64.ln()]]));
        assert_eq!(k[0], 0.0);
        assert!((k[1] - 0.5).abs() < 1e-15);
        assert!((k[2] - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-15);
        assert!((k[2] - 0.806853).abs() < 1e-6);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mu = array![[0.7, -1.2, 0.1]];
        let lv = array![[-0.5, 0.3, -1.5]];
        let s = stats(mu.clone(), lv.clone());
        let exact = kl_to_standard_normal(&s)[0];
        let mut rng = RngStream::new(3, "mc");
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut lq_minus_lp = 0.0;
            for i in 0..3 {
                let sd = (lv[[0, i]] / 2.0f64).exp();
                let e = rng.next_gauss();
                let z = mu[[0, i]] + sd * e;
                // ln q − ln p, the 2π terms cancel
                lq_minus_lp += -0.5 * e * e - sd.ln() + 0.5 * z * z;
            }
            acc += lq_minus_lp;
        }
        let mc = acc / n as f64;
        assert!(exact >= 0.0);
        assert!(((mc - exact) / exact).abs() < 0.02, "mc {mc} exact {exact}");
    }

    #[test]
    fn reparameterize_limits_and_moments() {
        let mu = array![[0.25, -3.5, 1e3]];
        let s = stats(mu.clone(), Array2::from_elem((1, 3), -80.0));
        let z = reparameterize(&s, &mut RngStream::new(1, "reparam"));
        for (a, b) in z.iter().zip(mu.iter()) {
            assert!((a - b).abs() <= 1e-16 * b.abs().max(1.0));
        }
        let s = stats(Array2::zeros((100_000, 1)), Array2::zeros((100_000, 1)));
        let z = reparameterize(&s, &mut RngStream::new(2, "reparam"));
        let mean = z.mean().unwrap();
        let var = z.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!((var - 1.0).abs() < 0.02);
    }

    fn specs() -> Vec<DecoderSpec> {
        vec![
            DecoderSpec::gaussian(0.3),
            DecoderSpec::gaussian(0.7).with_beta(2.5),
            DecoderSpec::laplace(0.4),
            DecoderSpec::laplace(0.9).with_beta(0.5),
            DecoderSpec::bernoulli(),
        ]
    }

    #[test]
    fn elbo_gradients_match_finite_differences() {
        let m = tiny_model(11);
        let x = unit_data(4, 6, 12);
        let eps: Array2<f64> = RngStream::new(13, "eps").gauss(4, 2);
        for spec in specs() {
            let (_, g) = m.loss_and_grads(x.view(), x.view(), &spec, eps.view()).unwrap();
            let loss = |mm: &VaeModel<f64>| -mm.elbo_with_noise(x.view(), x.view(), &spec, eps.view()).unwrap().mean_elbo();
            let rep = gradcheck::check(&m.phi, &g.phi, 1e-5, |p| {
                let mut mm = m.clone();
                mm.phi = p.clone();
                loss(&mm)
            });
            assert!(rep.passes(1e-6), "{spec} phi {rep:?}");
            let rep = gradcheck::check(&m.theta, &g.theta, 1e-5, |p| {
                let mut mm = m.clone();
                mm.theta = p.clone();
                loss(&mm)
            });
            assert!(rep.passes(1e-6), "{spec} theta {rep:?}");
        }
    }

    #[test]
    fn latent_gradient_wrt_mu_is_identity() {
        // dz/dmu = I: perturbing mu by h moves z by exactly h.
        let mu = array![[0.3, -0.4]];
        let lv = array![[-0.2, 0.5]];
        let h = 1e-5;
        for i in 0..2 {
            let mut up = mu.clone();
            up[[0, i]] += h;
            let mut dn = mu.clone();
            dn[[0, i]] -= h;
            let zu = reparameterize(&stats(up, lv.clone()), &mut RngStream::new(4, "reparam"));
            let zd = reparameterize(&stats(dn, lv.clone()), &mut RngStream::new(4, "reparam"));
            for j in 0..2 {
                let fd = (zu[[0, j]] - zd[[0, j]]) / (2.0 * h);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((fd - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn halving_sigma_quadruples_weighted_recon() {
        let m = tiny_model(5);
        let x = unit_data(3, 6, 6);
        let eps: Array2<f64> = RngStream::new(7, "eps").gauss(3, 2);
        let a = m.elbo_with_noise(x.view(), x.view(), &DecoderSpec::gaussian(0.2), eps.view()).unwrap();
        let b = m.elbo_with_noise(x.view(), x.view(), &DecoderSpec::gaussian(0.1), eps.view()).unwrap();
        for (ta, tb) in a.terms.iter().zip(&b.terms) {
            assert_eq!(ta.recon, tb.recon);
            assert!((tb.weighted_recon - 4.0 * ta.weighted_recon).abs() <= 1e-14 * tb.weighted_recon);
            assert!((ta.elbo + ta.weighted_recon + ta.kl).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_elbo_is_self_consistent() {
        let m = tiny_model(8);
        let x = unit_data(1, 6, 9);
        let spec = DecoderSpec::gaussian(0.5);
        let draws = |n: usize, seed: u64| {
            let xs = Array2::from_shape_fn((n, 6), |(_, j)| x[[0, j]]);
            m.elbo(xs.view(), &spec, &mut RngStream::new(seed, "reparam")).unwrap().elbos()
        };
        let small = draws(10_000, 1);
        let big = draws(100_000, 2);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ms, mb) = (mean(&small), mean(&big));
        let var = small.iter().map(|e| (e - ms).powi(2)).sum::<f64>() / (small.len() - 1) as f64;
        let se = (var / small.len() as f64).sqrt();
        assert!((ms - mb).abs() < 3.0 * se, "{ms} vs {mb}, se {se}");
    }

    /// Linear decoder `x = Wz + b + N(0, σ²I)`, `z ~ N(0, I)`, d = d_z = 2:
    /// the evidence is Gaussian with covariance `WWᵀ + σ²I`.
    fn log_evidence(w: &Array2<f64>, b: &[f64; 2], sigma: f64, x: &[f64; 2]) -> f64 {
        let c = w.dot(&w.t()) + Array2::<f64>::eye(2) * sigma * sigma;
        let det = c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]];
        let r = [x[0] - b[0], x[1] - b[1]];
        let quad = (c[[1, 1]] * r[0] * r[0] - 2.0 * c[[0, 1]] * r[0] * r[1] + c[[0, 0]] * r[1] * r[1]) / det;
        -0.5 * quad - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
    }

    /// Gaussian ELBO with the expectation of the reconstruction taken in
    /// closed form: `E‖x − Wz − b‖² = ‖x − Wμ − b‖² + Σ_j s_j² ‖W_·j‖²`.
    fn linear_elbo(w: &Array2<f64>, b: &[f64; 2], sigma: f64, x: &[f64; 2], s: &PosteriorStats<f64>) -> f64 {
        let mu = s.mu.row(0);
        let mut sq = 0.0;
        for i in 0..2 {
            let r = x[i] - b[i] - w[[i, 0]] * mu[0] - w[[i, 1]] * mu[1];
            sq += r * r;
        }
        for j in 0..2 {
            sq += s.log_var[[0, j]].exp() * (w[[0, j]].powi(2) + w[[1, j]].powi(2));
        }
        // −(d/2) ln 2πσ² with d = 2
        let dropped = -(2.0 * std::f64::consts::PI * sigma * sigma).ln();
        -sq / (2.0 * sigma * sigma) - kl_to_standard_normal(s)[0] + dropped
    }

    #[test]
    fn elbo_bounds_linear_gaussian_evidence() {
        let mut rng = RngStream::new(21, "bound");
        for _ in 0..100 {
            let w = Array2::from_shape_fn((2, 2), |_| rng.next_gauss());
            let b = [rng.next_gauss(), rng.next_gauss()];
            let x = [rng.next_gauss(), rng.next_gauss()];
            let sigma = 0.2 + rng.next_uniform();
            let s = stats(
                Array2::from_shape_fn((1, 2), |_| rng.next_gauss()),
                Array2::from_shape_fn((1, 2), |_| rng.next_gauss()),
            );
            assert!(linear_elbo(&w, &b, sigma, &x, &s) <= log_evidence(&w, &b, sigma, &x) + 1e-12);
        }
    }

    #[test]
    fn bound_is_tight_at_exact_posterior() {
        // Orthogonal columns make the true posterior factorize.
        let w: Array2<f64> = array![[1.2, -0.3], [0.4, 0.9]];
        let b = [0.1, -0.2];
        let x = [0.8, 0.5];
        let sigma = 0.6;
        let s2 = sigma * sigma;
        let mut mu = Array2::zeros((1, 2));
        let mut lv = Array2::zeros((1, 2));
        for j in 0..2 {
            let norm2 = w[[0, j]].powi(2) + w[[1, j]].powi(2);
            let var: f64 = 1.0 / (1.0 + norm2 / s2);
            mu[[0, j]] = var * (w[[0, j]] * (x[0] - b[0]) + w[[1, j]] * (x[1] - b[1])) / s2;
            lv[[0, j]] = var.ln();
        }
        let s = stats(mu, lv);
        let gap = log_evidence(&w, &b, sigma, &x) - linear_elbo(&w, &b, sigma, &x, &s);
        assert!(gap.abs() < 1e-12, "gap {gap}");
    }

    #[test]
    fn bernoulli_rejects_out_of_range_targets_but_eval_clamps() {
        let m = tiny_model(2);
        let mut x = unit_data(2, 6, 3);
        x[[1, 4]] = 1.3;
        let spec = DecoderSpec::bernoulli();
        assert!(matches!(
            m.elbo(x.view(), &spec, &mut RngStream::new(1, "r")),
            Err(Error::BernoulliTargetOutOfRange { .. })
        ));
        let e = m.elbo_eval(x.view(), x.view(), &spec, &mut RngStream::new(1, "r")).unwrap();
        assert!(e.terms.iter().all(|t| t.elbo.is_finite() && t.recon >= 0.0));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let m = tiny_model(4).cast::<f32>();
        let spec = DecoderSpec::laplace(0.3).with_beta(2.0);
        let meta = TrainingMeta { seed: 1, epochs: 2, lr: 1e-3, batch_size: 8 };
        let ckpt = m.to_checkpoint(&spec, meta);
        let (back, spec2) = VaeModel::<f32>::from_checkpoint(&ckpt).unwrap();
        assert_eq!(back, m);
        assert_eq!(spec2, spec);
    }

    #[test]
    fn reconstruct_is_stochastic_and_in_range() {
        let shape = ModelShape { d: 4, d_z: 2, encoder_hidden: vec![3], decoder_hidden: vec![3] };
        let m = VaeModel::<f32>::init(&shape, &mut RngStream::new(1, "init")).unwrap();
        let meta = TrainingMeta { seed: 1, epochs: 0, lr: 0.0, batch_size: 1 };
        let ckpt = m.to_checkpoint(&DecoderSpec::gaussian(0.5), meta);
        let y = ImageBatch::new(array![[0.1f32, 2.0, -1.0, 0.5], [0.0, 0.0, 1.0, 1.0]], 2).unwrap();
        let a = reconstruct(&ckpt, &y, &mut RngStream::new(1, "r")).unwrap();
        let b = reconstruct(&ckpt, &y, &mut RngStream::new(2, "r")).unwrap();
        assert_eq!(a.side(), 2);
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_ne!(a.data(), b.data());
    }
}
