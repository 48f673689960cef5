use std::path::{Path, PathBuf};

use crate::dataio::{write_csv, write_grid, Checkpoint, ImageBatch, ModelKind};
use crate::deen::{bayes_estimate, squared_error, EnergyModel};
use crate::error::{Error, Result};
use crate::noise::{corrupt, CorruptorSpec, RngStream};
use crate::vae::{reconstruct, VaeModel};

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub model: String,
    /// Mean over images of `‖x̂ − x_clean‖²`.
    pub mse_to_clean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub paths: Vec<PathBuf>,
    /// First row is the corrupted input itself (`‖y − x_clean‖²`).
    pub rows: Vec<RobustnessRow>,
}

impl GridOutput {
    pub fn baseline(&self) -> f64 {
        self.rows[0].mse_to_clean
    }

    pub fn mse_of(&self, model: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model).map(|r| r.mse_to_clean)
    }
}

pub const BASELINE_ROW: &str = "corrupted_input";

/// Denoises `y` with any checkpoint. VAEs reconstruct through one posterior
/// sample; DEEN applies its Bayes estimator at its training σ unless
/// `deen_sigma` overrides it.
pub fn denoise(ckpt: &Checkpoint, y: &ImageBatch, stream: &mut RngStream, deen_sigma: Option<f64>) -> Result<ImageBatch> {
    if ckpt.kind == ModelKind::Deen {
        let mut model = EnergyModel::<f32>::from_checkpoint(ckpt)?;
        if let Some(s) = deen_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("deen sigma must be > 0, got {s}")));
            }
            model.sigma = s;
        }
        ImageBatch::new(bayes_estimate(&model, y.data())?, y.side())
    } else {
        reconstruct(ckpt, y, stream)
    }
}

/// Writes `clean.pgm`, `corrupted.pgm`, one `recon_{i}.pgm` per model and
/// `robustness.csv`. Corruption draws from `stream.derive("corrupt")`, model
/// `i` from `stream.derive("recon/{i}")`.
pub fn robustness_grid(
    models: &[(String, Checkpoint)],
    clean: &ImageBatch,
    spec: &CorruptorSpec,
    stream: &RngStream,
    out_dir: &Path,
    cols: usize,
    deen_sigma: Option<f64>,
) -> Result<GridOutput> {
    spec.validate()?;
    if cols == 0 {
        return Err(Error::InvalidParameter("grid columns must be positive".into()));
    }
    let noisy = corrupt(clean, spec, &mut stream.derive("corrupt"))?;
    let mut paths = vec![out_dir.join("clean.pgm"), out_dir.join("corrupted.pgm")];
    write_grid(clean, cols, &paths[0])?;
    write_grid(&noisy, cols, &paths[1])?;
    let mut rows = vec![RobustnessRow {
        model: BASELINE_ROW.into(),
        mse_to_clean: squared_error(clean.data(), noisy.data()),
    }];
    for (i, (name, ckpt)) in models.iter().enumerate() {
        let out = denoise(ckpt, &noisy, &mut stream.derive(&format!("recon/{i}")), deen_sigma)?;
        let path = out_dir.join(format!("recon_{i}.pgm"));
        write_grid(&out, cols, &path)?;
        paths.push(path);
        rows.push(RobustnessRow { model: name.clone(), mse_to_clean: squared_error(clean.data(), out.data()) });
    }
    let csv = out_dir.join("robustness.csv");
    let table: Vec<(String, Vec<f64>)> = rows.iter().map(|r| (r.model.clone(), vec![r.mse_to_clean])).collect();
    write_csv(&["model", "mse_to_clean"], &table, &csv)?;
    paths.push(csv);
    Ok(GridOutput { paths, rows })
}

/// Decodes `n` draws `z ~ N(0, I)` and writes them as a grid. No decoder
/// noise is added.
pub fn sample_prior(ckpt: &Checkpoint, n: usize, stream: &mut RngStream, path: &Path, cols: usize) -> Result<ImageBatch> {
    if n == 0 {
        return Err(Error::EmptyRequest("prior samples"));
    }
    if !ckpt.kind.is_vae() {
        return Err(Error::WrongModelKind { expected: "a VAE", found: ckpt.kind.name() });
    }
    let (model, _) = VaeModel::<f32>::from_checkpoint(ckpt)?;
    let z = stream.gauss::<f32>(n, model.shape().d_z);
    let side = (model.shape().d as f64).sqrt().round() as usize;
    let batch = ImageBatch::new(model.decode(z.view())?, side)?;
    write_grid(&batch, cols.max(1), path)?;
    Ok(batch)
}
