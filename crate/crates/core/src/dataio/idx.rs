use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{ImageBatch, LabelBatch};
use crate::error::{io_err, Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedPayload {
            declared: at + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::WrongMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 unsigned-byte image file; pixels are scaled to [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageBatch> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows != cols {
        return Err(Error::ShapeMismatch(format!(
            "non-square images {rows}×{cols}"
        )));
    }
    let d = rows * cols;
    let declared = n
        .checked_mul(d)
        .and_then(|p| p.checked_add(16))
        .ok_or_else(|| Error::ShapeMismatch("IDX dimensions overflow".into()))?;
    if bytes.len() < declared {
        return Err(Error::TruncatedPayload {
            declared,
            available: bytes.len(),
        });
    }
    let data = Array2::from_shape_vec(
        (n, d),
        bytes[16..declared].iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    ImageBatch::new(data, rows)
}

/// Parses an IDX1 unsigned-byte label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<LabelBatch> {
    check_magic(bytes, LABEL_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let declared = n + 8;
    if bytes.len() < declared {
        return Err(Error::TruncatedPayload {
            declared,
            available: bytes.len(),
        });
    }
    LabelBatch::new(bytes[8..declared].to_vec())
}

/// Serializes raw pixel bytes as an IDX3 image file.
pub fn encode_idx_images(pixels: &[u8], n: usize, side: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), n * side * side, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, side as u32, side as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

fn find_file(dir: &Path, prefix: &str, what: &str, idx: &str) -> PathBuf {
    let dashed = dir.join(format!("{prefix}-{what}-{idx}-ubyte"));
    if dashed.exists() {
        return dashed;
    }
    let dotted = dir.join(format!("{prefix}-{what}.{idx}-ubyte"));
    if dotted.exists() {
        return dotted;
    }
    dashed
}

/// Loads one split of MNIST from the standard uncompressed file names.
pub fn load_mnist(dir: &Path, split: Split) -> Result<(ImageBatch, LabelBatch)> {
    let img_path = find_file(dir, split.prefix(), "images", "idx3");
    let lbl_path = find_file(dir, split.prefix(), "labels", "idx1");
    let images = parse_idx_images(&fs::read(&img_path).map_err(io_err(&img_path))?)?;
    let labels = parse_idx_labels(&fs::read(&lbl_path).map_err(io_err(&lbl_path))?)?;
    if images.n() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images but {} labels",
            images.n(),
            labels.len()
        )));
    }
    Ok((images, labels))
}
