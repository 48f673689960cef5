//! Procedurally rendered handwritten-style digits in MNIST layout.
//!
//! Each digit is a set of pen strokes in a unit box. Samples get randomized
//! control-point jitter, rotation, shear, scale, translation and stroke width,
//! then are rasterized with an anti-aliased pen onto a 28×28 canvas and
//! quantized to bytes. Output is emitted as IDX files so it travels the same
//! path as the real dataset.

use std::f64::consts::PI;
use std::path::Path;

use super::{atomic_write, encode_idx_images, encode_idx_labels};
use crate::error::Result;
use crate::noise::RngStream;

pub const SIDE: usize = 28;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|k| {
            let t = (from_deg + (to_deg - from_deg) * k as f64 / steps as f64) * PI / 180.0;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn template(digit: u8) -> Vec<Stroke> {
    // Unit box, y pointing down; angle 270° is the top of a circle.
    match digit {
        0 => vec![arc(0.5, 0.5, 0.32, 0.45, 0.0, 360.0)],
        1 => vec![vec![(0.36, 0.2), (0.56, 0.05), (0.52, 0.95)]],
        2 => {
            let mut s = arc(0.5, 0.3, 0.3, 0.25, 180.0, 380.0);
            s.extend([(0.15, 0.95), (0.85, 0.95)]);
            vec![s]
        }
        3 => vec![
            arc(0.48, 0.28, 0.26, 0.22, 200.0, 450.0),
            arc(0.48, 0.72, 0.3, 0.25, 270.0, 520.0),
        ],
        4 => vec![
            vec![(0.62, 0.05), (0.15, 0.65), (0.85, 0.65)],
            vec![(0.65, 0.3), (0.65, 0.95)],
        ],
        5 => {
            let mut s = vec![(0.8, 0.05), (0.27, 0.05), (0.24, 0.48)];
            s.extend(arc(0.48, 0.68, 0.3, 0.27, 210.0, 515.0));
            vec![s]
        }
        6 => {
            let mut s = vec![(0.72, 0.05), (0.42, 0.28)];
            s.extend(arc(0.5, 0.7, 0.28, 0.26, 200.0, 560.0));
            vec![s]
        }
        7 => vec![vec![(0.15, 0.05), (0.85, 0.05), (0.4, 0.95)]],
        8 => vec![
            arc(0.5, 0.27, 0.22, 0.22, 0.0, 360.0),
            arc(0.5, 0.72, 0.27, 0.24, 0.0, 360.0),
        ],
        _ => vec![
            arc(0.5, 0.3, 0.26, 0.25, 0.0, 360.0),
            vec![(0.76, 0.3), (0.66, 0.95)],
        ],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one digit as `SIDE²` bytes.
pub fn render_digit(digit: u8, rng: &mut RngStream) -> Vec<u8> {
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_uniform();
    let jitter = 0.045;
    let angle = uniform(-0.25, 0.25);
    let shear = uniform(-0.3, 0.3);
    let sx = uniform(13.0, 18.0);
    let sy = uniform(18.0, 21.0);
    let tx = uniform(-1.5, 1.5);
    let ty = uniform(-1.5, 1.5);
    let radius = uniform(0.9, 1.9);
    let (sin, cos) = angle.sin_cos();

    let strokes: Vec<Stroke> = template(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let x = x + uniform(-jitter, jitter) - 0.5;
                    let y = y + uniform(-jitter, jitter) - 0.5;
                    let (x, y) = (x * sx + shear * y * sy, y * sy);
                    let (x, y) = (cos * x - sin * y, sin * x + cos * y);
                    (x + 13.5 + tx, y + 13.5 + ty)
                })
                .collect()
        })
        .collect();

    let mut pixels = vec![0u8; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let p = (c as f64, r as f64);
            let dist = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let ink = (radius + 0.5 - dist).clamp(0.0, 1.0);
            pixels[r * SIDE + c] = (ink * 255.0).round() as u8;
        }
    }
    pixels
}

/// Generates `n` digits with labels cycling through a shuffled order.
pub fn generate(n: usize, seed: u64, label: &str) -> (Vec<u8>, Vec<u8>) {
    let mut rng = RngStream::new(seed, label);
    let mut pixels = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let digit = rng.next_below(10) as u8;
        labels.push(digit);
        pixels.extend(render_digit(digit, &mut rng));
    }
    (pixels, labels)
}

/// Writes a train/test pair of IDX files under the standard MNIST names.
pub fn write_synthetic_mnist(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    for (prefix, n, label) in [("train", n_train, "synthetic/train"), ("t10k", n_test, "synthetic/test")] {
        let (pixels, labels) = generate(n, seed, label);
        atomic_write(
            &dir.join(format!("{prefix}-images-idx3-ubyte")),
            &encode_idx_images(&pixels, n, SIDE),
        )?;
        atomic_write(
            &dir.join(format!("{prefix}-labels-idx1-ubyte")),
            &encode_idx_labels(&labels),
        )?;
    }
    Ok(())
}
