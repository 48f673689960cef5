use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;

/// A labelled, seeded random stream.
///
/// The ChaCha key is derived from `(master_seed, label)` only, so streams with
/// different labels never share state and adding a new stream leaves all
/// existing ones untouched.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    label: String,
    rng: ChaCha8Rng,
    spare_gauss: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(master_seed: u64, label: &str) -> Self {
        let mut state = master_seed ^ fnv1a(label.as_bytes());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            master_seed,
            label: label.to_owned(),
            rng: ChaCha8Rng::from_seed(key),
            spare_gauss: None,
        }
    }

    /// Derives an independent stream `"{label}/{suffix}"` under the same seed.
    pub fn derive(&self, suffix: &str) -> Self {
        Self::new(self.master_seed, &format!("{}/{}", self.label, suffix))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform on [0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn next_below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn next_gauss(&mut self) -> f64 {
        if let Some(z) = self.spare_gauss.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_gauss = Some(r * sin);
        r * cos
    }

    /// Laplace(0, scale) by inverse CDF.
    pub fn next_laplace(&mut self, scale: f64) -> f64 {
        loop {
            let u = self.next_uniform();
            let c = u - 0.5;
            let tail = 1.0 - 2.0 * c.abs();
            if tail > 0.0 {
                return -scale * c.signum() * tail.ln();
            }
        }
    }

    pub fn gauss<T: Real>(&mut self, rows: usize, cols: usize) -> Array2<T> {
        Array2::from_shape_simple_fn((rows, cols), || T::cast(self.next_gauss()))
    }

    pub fn laplace_sample<T: Real>(&mut self, scale: f64, rows: usize, cols: usize) -> Array2<T> {
        Array2::from_shape_simple_fn((rows, cols), || T::cast(self.next_laplace(scale)))
    }

    pub fn uniform<T: Real>(&mut self, rows: usize, cols: usize) -> Array2<T> {
        Array2::from_shape_simple_fn((rows, cols), || T::cast(self.next_uniform()))
    }

    /// Fisher–Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}
