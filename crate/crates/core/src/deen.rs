//! Neural empirical Bayes denoising: a scalar energy `f(y)` trained so that
//! `x̂(y) = y − σ²∇f(y)` minimizes the expected squared error to the clean
//! signal.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dataio::{Checkpoint, Hyper, ImageBatch, ModelKind, NetShape};
use crate::error::{Error, Result};
use crate::nn::{grad_of_input_grad, AdamState, Mlp, ParamStore, Tape};
use crate::noise::RngStream;
use crate::real::Real;
use crate::vae::Schedule;

const PREFIX: &str = "energy";

pub trait Energy<T: Real> {
    /// Noise scale of the estimator.
    fn sigma(&self) -> f64;

    fn energy(&self, y: ArrayView2<T>) -> Result<Array1<T>>;

    /// `∇_y f` row by row.
    fn input_grad(&self, y: ArrayView2<T>) -> Result<Array2<T>>;
}

/// `x̂(y) = y − σ²∇f(y)`.
pub fn bayes_estimate<T: Real>(model: &impl Energy<T>, y: ArrayView2<T>) -> Result<Array2<T>> {
    let g = model.input_grad(y)?;
    let s2 = T::cast(model.sigma() * model.sigma());
    Ok(&y - &(g * s2))
}

/// Mean over examples of `‖x − x̂(y)‖²`.
pub fn deen_loss<T: Real>(model: &impl Energy<T>, x: ArrayView2<T>, y: ArrayView2<T>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::ShapeMismatch(format!("x {:?} vs y {:?}", x.dim(), y.dim())));
    }
    let xhat = bayes_estimate(model, y)?;
    Ok(squared_error(x, xhat.view()))
}

/// Mean over rows of the squared Euclidean distance.
pub fn squared_error<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> f64 {
    let total: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p.as_f64() - q.as_f64()).powi(2)).sum();
    total / a.nrows() as f64
}

/// `f(y) = ‖y − c‖² / (2s)`: the smoothed energy of a point mass at `c`
/// when `s = 1 + σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnergy {
    pub center: Array1<f64>,
    pub scale: f64,
    pub sigma: f64,
}

impl QuadraticEnergy {
    /// Exact energy of N(c, (1 + σ²)I), the density of `Y = c + σε` convolved
    /// with a unit-variance prior spread around `c`.
    pub fn point_prior(center: Array1<f64>, sigma: f64) -> Self {
        Self { center, scale: 1.0 + sigma * sigma, sigma }
    }

    fn check(&self, y: &ArrayView2<f64>) -> Result<()> {
        if y.ncols() != self.center.len() {
            return Err(Error::ShapeMismatch(format!("width {}, expected {}", y.ncols(), self.center.len())));
        }
        Ok(())
    }
}

impl Energy<f64> for QuadraticEnergy {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn energy(&self, y: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check(&y)?;
        let r = &y - &self.center;
        Ok(r.mapv(|v| v * v).sum_axis(Axis(1)) / (2.0 * self.scale))
    }

    fn input_grad(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&y)?;
        Ok((&y - &self.center) / self.scale)
    }
}

/// Dense SiLU energy network with a scalar readout.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel<T> {
    mlp: Mlp,
    pub params: ParamStore<T>,
    pub sigma: f64,
}

impl<T: Real> EnergyModel<T> {
    /// Default desk-scale hidden widths.
    pub const DESK_HIDDEN: [usize; 2] = [512, 256];

    pub fn init(d: usize, hidden: &[usize], sigma: f64, rng: &mut RngStream) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        let mlp = Mlp::new(PREFIX, &widths(d, hidden))?;
        let mut params = ParamStore::new();
        mlp.init(&mut params, rng)?;
        Ok(Self { mlp, params, sigma })
    }

    pub fn from_params(d: usize, hidden: &[usize], sigma: f64, params: ParamStore<T>) -> Result<Self> {
        let mlp = Mlp::new(PREFIX, &widths(d, hidden))?;
        mlp.layer_ids(&params)?;
        Ok(Self { mlp, params, sigma })
    }

    pub fn widths(&self) -> &[usize] {
        self.mlp.widths()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn cast<U: Real>(&self) -> EnergyModel<U> {
        EnergyModel { mlp: self.mlp.clone(), params: self.params.cast(), sigma: self.sigma }
    }

    fn check(&self, y: &ArrayView2<T>) -> Result<()> {
        if y.ncols() != self.mlp.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "energy input width {}, expected {}",
                y.ncols(),
                self.mlp.input_width()
            )));
        }
        Ok(())
    }

    /// Loss and its parameter gradient from one second-order tape.
    pub fn loss_and_grad(&self, x: ArrayView2<T>, y: ArrayView2<T>) -> Result<(f64, ParamStore<T>)> {
        self.check(&y)?;
        if x.dim() != y.dim() {
            return Err(Error::ShapeMismatch(format!("x {:?} vs y {:?}", x.dim(), y.dim())));
        }
        let n = y.nrows();
        let mut tape = Tape::new();
        let slot = tape.bind();
        let yv = tape.constant(y.to_owned());
        let trace = self.mlp.forward(&mut tape, slot, &self.params, yv)?;
        let ones = tape.constant(Array2::ones((n, 1)));
        let g = self.mlp.record_input_vjp(&mut tape, &trace, ones);
        let step = tape.affine(g, T::cast(self.sigma * self.sigma), T::zero());
        let xhat = tape.sub(yv, step);
        let xv = tape.constant(x.to_owned());
        let diff = tape.sub(xv, xhat);
        let sq = tape.square(diff);
        let total = tape.sum_all(sq);
        let loss = tape.affine(total, T::cast(1.0 / n as f64), T::zero());
        let value = tape.value(loss)[[0, 0]].as_f64();
        let mut grads = tape.backward(loss, Array2::ones((1, 1)).view())?;
        Ok((value, grads.take_store(slot, &self.params)))
    }

    /// The same gradient assembled as `∇_ϑ⟨∇_y f, v⟩` with
    /// `v = (2σ²/n)(x − x̂)` held fixed.
    pub fn loss_grad_via_vjp(&self, x: ArrayView2<T>, y: ArrayView2<T>) -> Result<ParamStore<T>> {
        let xhat = bayes_estimate(self, y)?;
        let v = (&x - &xhat) * T::cast(2.0 * self.sigma * self.sigma / y.nrows() as f64);
        grad_of_input_grad(&self.mlp, &self.params, y, v.view())
    }

    pub fn to_checkpoint(&self, schedule: &Schedule) -> Checkpoint {
        let w = self.mlp.widths();
        Checkpoint {
            kind: ModelKind::Deen,
            hyper: Hyper { sigma: self.sigma, alpha: 0.0, beta: 0.0 },
            shape: NetShape {
                d: w[0],
                d_z: 0,
                encoder_hidden: w[1..w.len() - 1].to_vec(),
                decoder_hidden: Vec::new(),
            },
            params: self.params.cast(),
            meta: schedule.meta(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Deen {
            return Err(Error::WrongModelKind { expected: ModelKind::Deen.name(), found: ckpt.kind.name() });
        }
        Self::from_params(ckpt.shape.d, &ckpt.shape.encoder_hidden, ckpt.hyper.sigma, ckpt.params.cast())
    }
}

fn widths(d: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = vec![d];
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

impl<T: Real> Energy<T> for EnergyModel<T> {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn energy(&self, y: ArrayView2<T>) -> Result<Array1<T>> {
        self.check(&y)?;
        let mut tape = Tape::new();
        let slot = tape.bind();
        let yv = tape.constant(y.to_owned());
        let trace = self.mlp.forward(&mut tape, slot, &self.params, yv)?;
        Ok(tape.value(trace.output).column(0).to_owned())
    }

    fn input_grad(&self, y: ArrayView2<T>) -> Result<Array2<T>> {
        self.check(&y)?;
        let mut tape = Tape::new();
        let slot = tape.bind();
        let yv = tape.input(y.to_owned());
        let trace = self.mlp.forward(&mut tape, slot, &self.params, yv)?;
        let grads = tape.backward(trace.output, Array2::ones((y.nrows(), 1)).view())?;
        Ok(grads.wrt(yv).cloned().unwrap_or_else(|| Array2::zeros(y.raw_dim())))
    }
}

/// Trains an energy network on clean data with fresh Gaussian corruption
/// per minibatch.
pub fn train_deen(data: &ImageBatch, sigma: f64, hidden: &[usize], schedule: &Schedule) -> Result<Checkpoint> {
    train_deen_with(data, sigma, hidden, schedule, |_, _| Ok(()))
}

/// [`train_deen`] with a hook after every epoch (and epoch 0 before training).
pub fn train_deen_with(
    data: &ImageBatch,
    sigma: f64,
    hidden: &[usize],
    schedule: &Schedule,
    mut on_epoch: impl FnMut(usize, &EnergyModel<f32>) -> Result<()>,
) -> Result<Checkpoint> {
    schedule.validate()?;
    let mut init = RngStream::new(schedule.seed, "init");
    let mut shuffle = RngStream::new(schedule.seed, "shuffle");
    let mut noise = RngStream::new(schedule.seed, "corrupt");
    let mut model = EnergyModel::<f32>::init(data.d(), hidden, sigma, &mut init)?;
    let mut adam = AdamState::new(&model.params, schedule.lr);
    on_epoch(0, &model)?;

    let x = data.data();
    for epoch in 1..=schedule.epochs {
        let order = shuffle.permutation(data.n());
        let mut total = 0.0;
        for (step, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb = &xb + &(noise.gauss::<f32>(chunk.len(), data.d()) * sigma as f32);
            let (loss, grads) = model.loss_and_grad(xb.view(), yb.view())?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut model.params, &grads)?;
        }
        log::info!("deen σ={sigma} epoch {epoch}: mean loss {:.6}", total / data.n() as f64);
        on_epoch(epoch, &model)?;
    }
    Ok(model.to_checkpoint(schedule))
}
