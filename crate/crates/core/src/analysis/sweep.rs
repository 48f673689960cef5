use std::path::{Path, PathBuf};

use super::{fit_power_law, metrics, PowerLawFit, SweepRow};
use crate::dataio::{atomic_write, save_checkpoint, write_csv, ImageBatch};
use crate::error::{Error, Result};
use crate::noise::RngStream;
use crate::vae::{train, DecoderSpec, ModelShape, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Gaussian,
    Laplace,
}

impl SweepKind {
    pub fn spec(self, param: f64) -> DecoderSpec {
        match self {
            SweepKind::Gaussian => DecoderSpec::gaussian(param),
            SweepKind::Laplace => DecoderSpec::laplace(param),
        }
    }

    /// Name of the swept parameter.
    pub fn param_name(self) -> &'static str {
        match self {
            SweepKind::Gaussian => "sigma",
            SweepKind::Laplace => "alpha",
        }
    }
}

pub const SWEEP_HEADER: [&str; 6] = ["kind", "param", "kl", "mse", "elbo", "ratio"];

#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Fails with `InsufficientPoints` on grids shorter than three.
    pub fit: Result<PowerLawFit>,
    pub checkpoints: Vec<PathBuf>,
    pub table: PathBuf,
}

/// Trains one model per grid value with the same schedule (and seed),
/// evaluates each on `test`, and writes `{param}_{value}.ckpt`, `sweep.csv`
/// and, when the fit succeeds, `fit.txt`. Points run sequentially.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    grid: &[f64],
    kind: SweepKind,
    train_data: &ImageBatch,
    test: &ImageBatch,
    shape: &ModelShape,
    schedule: &Schedule,
    mc_samples: usize,
    out_dir: &Path,
) -> Result<SweepOutput> {
    if grid.is_empty() {
        return Err(Error::EmptyRequest("sweep grid"));
    }
    for &p in grid {
        kind.spec(p).validate()?;
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut checkpoints = Vec::with_capacity(grid.len());
    for &p in grid {
        let ckpt = train(train_data, &kind.spec(p), shape, schedule)?;
        let path = out_dir.join(format!("{}_{p}.ckpt", kind.param_name()));
        save_checkpoint(&ckpt, &path)?;
        checkpoints.push(path);
        let mut stream = RngStream::new(schedule.seed, "metrics");
        let row = metrics(&ckpt, test.data(), &mut stream, mc_samples)?;
        log::info!("{}={p}: kl {:.4} mse {:.4} elbo {:.4}", kind.param_name(), row.kl, row.mse, row.elbo);
        rows.push(row);
    }
    let table = out_dir.join("sweep.csv");
    let csv_rows: Vec<(String, Vec<f64>)> = rows.iter().map(|r| (kind.param_name().to_string(), r.values())).collect();
    write_csv(&SWEEP_HEADER, &csv_rows, &table)?;
    let fit = fit_power_law(&rows.iter().map(|r| (r.param, r.kl)).collect::<Vec<_>>());
    if let Ok(f) = &fit {
        atomic_write(&out_dir.join("fit.txt"), f.to_string().as_bytes())?;
    }
    Ok(SweepOutput { rows, fit, checkpoints, table })
}
