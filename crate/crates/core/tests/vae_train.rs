use ivae_core::dataio::{synthetic, write_checkpoint, ImageBatch};
use ivae_core::noise::RngStream;
use ivae_core::vae::{train, train_with, DecoderSpec, ModelShape, Schedule, VaeModel};
use ndarray::Array2;

fn digits(n: usize, seed: u64) -> ImageBatch {
    let (pixels, _) = synthetic::generate(n, seed, "train-test");
    let data = Array2::from_shape_vec((n, 784), pixels.iter().map(|&p| p as f32 / 255.0).collect()).unwrap();
    ImageBatch::new(data, 28).unwrap()
}

fn small_shape() -> ModelShape {
    ModelShape { d: 784, d_z: 4, encoder_hidden: vec![16], decoder_hidden: vec![16] }
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let data = digits(64, 1);
    let schedule = Schedule { epochs: 2, batch_size: 16, lr: 1e-3, seed: 9 };
    let spec = DecoderSpec::gaussian(0.3);
    let a = write_checkpoint(&train(&data, &spec, &small_shape(), &schedule).unwrap()).unwrap();
    let b = write_checkpoint(&train(&data, &spec, &small_shape(), &schedule).unwrap()).unwrap();
    assert_eq!(a, b);
    let other = Schedule { seed: 10, ..schedule };
    let c = write_checkpoint(&train(&data, &spec, &small_shape(), &other).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let data = digits(32, 2);
    let schedule = Schedule { epochs: 2, batch_size: 8, lr: 0.0, seed: 3 };
    let ckpt = train(&data, &DecoderSpec::laplace(0.5), &small_shape(), &schedule).unwrap();
    let init = VaeModel::<f32>::init(&small_shape(), &mut RngStream::new(3, "init")).unwrap();
    let (trained, _) = VaeModel::<f32>::from_checkpoint(&ckpt).unwrap();
    assert_eq!(trained, init);
}

#[test]
fn bernoulli_training_rejects_out_of_range_data() {
    let mut data = digits(8, 3).into_data();
    data[[0, 0]] = -0.1;
    let data = ImageBatch::new(data, 28).unwrap();
    let schedule = Schedule { epochs: 1, batch_size: 4, lr: 1e-3, seed: 0 };
    assert!(train(&data, &DecoderSpec::bernoulli(), &small_shape(), &schedule).is_err());
}

#[test]
fn held_out_elbo_improves_on_desk_scale_subset() {
    let data = digits(1000, 4);
    let held_out = digits(200, 5);
    let spec = DecoderSpec::gaussian(0.5);
    let schedule = Schedule { epochs: 3, batch_size: 16, lr: 1e-4, seed: 1 };
    let mut history = Vec::new();
    train_with(&data, &spec, &ModelShape::desk(), &schedule, |epoch, model| {
        let mut stream = RngStream::new(99, "held-out");
        let e = model.elbo(held_out.data(), &spec, &mut stream)?.mean_elbo();
        history.push((epoch, e));
        Ok(())
    })
    .unwrap();
    assert_eq!(history.len(), 4);
    let (first, last) = (history[0].1, history[3].1);
    assert!(last > first, "held-out ELBO {history:?}");
}
