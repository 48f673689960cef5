use ndarray::Axis;

use super::model::check_bernoulli_targets;
use super::{DecoderKind, DecoderSpec, ModelShape, VaeModel};
use crate::dataio::{Checkpoint, ImageBatch, TrainingMeta};
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::noise::RngStream;

/// Optimization schedule shared by every training entry point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 16, lr: 1e-4, seed: 0 }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        u32::try_from(self.epochs)
            .map_err(|_| Error::InvalidParameter(format!("epochs {} exceeds u32", self.epochs)))?;
        u32::try_from(self.batch_size)
            .map_err(|_| Error::InvalidParameter(format!("batch size {} exceeds u32", self.batch_size)))?;
        Ok(())
    }

    pub fn meta(&self) -> TrainingMeta {
        TrainingMeta {
            seed: self.seed,
            epochs: self.epochs as u32,
            lr: self.lr,
            batch_size: self.batch_size as u32,
        }
    }
}

/// Trains a VAE on clean data and returns the final checkpoint.
pub fn train(data: &ImageBatch, spec: &DecoderSpec, shape: &ModelShape, schedule: &Schedule) -> Result<Checkpoint> {
    train_with(data, spec, shape, schedule, |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch, and once with epoch 0
/// before the first update.
pub fn train_with(
    data: &ImageBatch,
    spec: &DecoderSpec,
    shape: &ModelShape,
    schedule: &Schedule,
    mut on_epoch: impl FnMut(usize, &VaeModel<f32>) -> Result<()>,
) -> Result<Checkpoint> {
    spec.validate()?;
    shape.validate()?;
    schedule.validate()?;
    if data.d() != shape.d {
        return Err(Error::ShapeMismatch(format!("data width {}, model expects {}", data.d(), shape.d)));
    }
    if spec.kind == DecoderKind::Bernoulli {
        check_bernoulli_targets(data.data())?;
    }

    let mut init = RngStream::new(schedule.seed, "init");
    let mut shuffle = RngStream::new(schedule.seed, "shuffle");
    let mut reparam = RngStream::new(schedule.seed, "reparam");

    let mut model = VaeModel::<f32>::init(shape, &mut init)?;
    let mut adam_phi = AdamState::new(&model.phi, schedule.lr);
    let mut adam_theta = AdamState::new(&model.theta, schedule.lr);
    on_epoch(0, &model)?;

    let x = data.data();
    for epoch in 1..=schedule.epochs {
        let order = shuffle.permutation(data.n());
        let mut total = 0.0;
        for (step, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let batch = x.select(Axis(0), chunk);
            let eps = reparam.gauss::<f32>(chunk.len(), shape.d_z);
            let (terms, grads) = model.loss_and_grads(batch.view(), batch.view(), spec, eps.view())?;
            let loss = -terms.mean_elbo();
            if !loss.is_finite() || !grads.phi.all_finite() || !grads.theta.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            total += loss * chunk.len() as f64;
            adam_phi.step(&mut model.phi, &grads.phi)?;
            adam_theta.step(&mut model.theta, &grads.theta)?;
        }
        log::info!("{spec} epoch {epoch}: mean loss {:.6}", total / data.n() as f64);
        on_epoch(epoch, &model)?;
    }
    Ok(model.to_checkpoint(spec, schedule.meta()))
}
