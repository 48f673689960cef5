use ivae_core::dataio::{synthetic, write_checkpoint, ImageBatch};
use ivae_core::deen::{bayes_estimate, deen_loss, squared_error, train_deen, train_deen_with, EnergyModel};
use ivae_core::noise::{corrupt, CorruptorSpec, RngStream};
use ivae_core::vae::Schedule;
use ndarray::Array2;

fn digits(n: usize, seed: u64) -> ImageBatch {
    let (pixels, _) = synthetic::generate(n, seed, "deen-test");
    let data = Array2::from_shape_vec((n, 784), pixels.iter().map(|&p| p as f32 / 255.0).collect()).unwrap();
    ImageBatch::new(data, 28).unwrap()
}

#[test]
fn same_seed_gives_identical_checkpoint() {
    let data = digits(48, 1);
    let schedule = Schedule { epochs: 1, batch_size: 16, lr: 1e-3, seed: 4 };
    let a = write_checkpoint(&train_deen(&data, 0.9, &[8], &schedule).unwrap()).unwrap();
    let b = write_checkpoint(&train_deen(&data, 0.9, &[8], &schedule).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn desk_scale_training_denoises() {
    let sigma = 0.9;
    let data = digits(4000, 2);
    let clean = digits(200, 3);
    let noisy = corrupt(&clean, &CorruptorSpec::Gaussian { sigma }, &mut RngStream::new(5, "corrupt")).unwrap();
    let schedule = Schedule { epochs: 5, batch_size: 16, lr: 1e-4, seed: 1 };
    let mut losses = Vec::new();
    let start = std::time::Instant::now();
    let ckpt = train_deen_with(&data, sigma, &EnergyModel::<f32>::DESK_HIDDEN, &schedule, |_, m| {
        losses.push(deen_loss(m, clean.data(), noisy.data())?);
        Ok(())
    })
    .unwrap();
    eprintln!("deen training {:?}, held-out losses {losses:?}", start.elapsed());
    assert!(losses.last().unwrap() < &losses[0]);
    let model = EnergyModel::<f32>::from_checkpoint(&ckpt).unwrap();
    let xhat = bayes_estimate(&model, noisy.data()).unwrap();
    let denoised = squared_error(clean.data(), xhat.view());
    let baseline = squared_error(clean.data(), noisy.data());
    eprintln!("denoised {denoised}, baseline {baseline}");
    assert!(denoised < baseline);
}
