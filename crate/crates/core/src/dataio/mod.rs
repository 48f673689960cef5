//! Data ingestion and file formats: MNIST IDX, checkpoints, CSV tables and
//! PGM image grids.

mod checkpoint;
mod grid;
mod idx;
pub mod synthetic;
mod table;

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{io_err, Error, Result};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, Hyper,
    ModelKind, NetShape, TrainingMeta,
};
pub use grid::{encode_grid, grid_dims, write_grid};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist, parse_idx_images, parse_idx_labels, Split,
};
pub use table::{read_csv, write_csv, CsvTable};

/// A batch of square grayscale images, one image per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    data: Array2<f32>,
    side: usize,
}

impl ImageBatch {
    pub fn new(data: Array2<f32>, side: usize) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::EmptyRequest("image batch with no examples"));
        }
        if data.ncols() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "image width {} is not side² = {}",
                data.ncols(),
                side * side
            )));
        }
        Ok(Self { data, side })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f32> {
        self.data
    }

    pub fn image(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Copies the selected rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::ShapeMismatch(format!(
                "index {bad} out of range for batch of {}",
                self.n()
            )));
        }
        Self::new(self.data.select(Axis(0), indices), self.side)
    }

    /// The first `n` examples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n());
        Self::new(self.data.slice(ndarray::s![..n, ..]).to_owned(), self.side)
    }

    /// Examples `start..end`.
    pub fn range(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.n());
        if start >= end {
            return Err(Error::EmptyRequest("empty example range"));
        }
        Self::new(self.data.slice(ndarray::s![start..end, ..]).to_owned(), self.side)
    }
}

/// Class labels paired with an [`ImageBatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelBatch {
    labels: Vec<u8>,
}

impl LabelBatch {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
            return Err(Error::LabelOutOfRange { index, label });
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices of the first `count` examples carrying `digit`.
    pub fn indices_of(&self, digit: u8, count: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == digit)
            .map(|(i, _)| i)
            .take(count)
            .collect()
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a half-written output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}
