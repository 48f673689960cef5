use std::path::Path;

use super::{atomic_write, ImageBatch};
use crate::error::{Error, Result};

const SEPARATOR: usize = 2;

/// Pixel dimensions `(width, height)` of a grid of `n` images.
pub fn grid_dims(n: usize, side: usize, cols: usize) -> (usize, usize) {
    let cols = cols.min(n).max(1);
    let rows = n.div_ceil(cols);
    (
        cols * side + (cols - 1) * SEPARATOR,
        rows * side + (rows.max(1) - 1) * SEPARATOR,
    )
}

fn to_byte(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v as f64 * 255.0).round_ties_even() as u8
}

/// Renders a batch as a binary PGM (P5) grid, row-major, separated by white
/// gutters.
pub fn encode_grid(batch: &ImageBatch, cols: usize) -> Result<Vec<u8>> {
    if cols == 0 {
        return Err(Error::InvalidParameter("grid needs at least one column".into()));
    }
    let side = batch.side();
    let n = batch.n();
    let (w, h) = grid_dims(n, side, cols);
    let cols = cols.min(n);
    let mut header = format!("P5\n{w} {h}\n255\n").into_bytes();
    let mut pixels = vec![255u8; w * h];
    for (k, img) in batch.data().outer_iter().enumerate() {
        let x0 = (k % cols) * (side + SEPARATOR);
        let y0 = (k / cols) * (side + SEPARATOR);
        for r in 0..side {
            let row = &mut pixels[(y0 + r) * w + x0..(y0 + r) * w + x0 + side];
            for (c, px) in row.iter_mut().enumerate() {
                *px = to_byte(img[r * side + c]);
            }
        }
    }
    header.extend_from_slice(&pixels);
    Ok(header)
}

pub fn write_grid(batch: &ImageBatch, cols: usize, path: &Path) -> Result<()> {
    atomic_write(path, &encode_grid(batch, cols)?)
}
