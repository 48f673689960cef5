//! The "IVAE" checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "IVAE"                      4 bytes magic
//! version                     u32 (= 1)
//! model_kind                  u8
//! sigma, alpha, beta          f64 × 3
//! d, d_z                      u32 × 2
//! n_enc, enc widths           u32, u32 × n_enc   (hidden widths; energy net for deen)
//! n_dec, dec widths           u32, u32 × n_dec
//! seed                        u64
//! epochs                      u32
//! lr                          f64
//! batch_size                  u32
//! n_arrays                    u32
//! per array:
//!   name_len, name            u32, UTF-8 bytes
//!   rank, dims                u32, u32 × rank
//!   values                    f32 × prod(dims)
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::atomic_write;
use crate::error::{io_err, Error, Result};
use crate::nn::ParamStore;

const MAGIC: &[u8; 4] = b"IVAE";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SigmaVae,
    AlphaVae,
    BetaVae,
    BernoulliVae,
    Deen,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::SigmaVae => 0,
            ModelKind::AlphaVae => 1,
            ModelKind::BetaVae => 2,
            ModelKind::BernoulliVae => 3,
            ModelKind::Deen => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ModelKind::SigmaVae,
            1 => ModelKind::AlphaVae,
            2 => ModelKind::BetaVae,
            3 => ModelKind::BernoulliVae,
            4 => ModelKind::Deen,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SigmaVae => "sigma_vae",
            ModelKind::AlphaVae => "alpha_vae",
            ModelKind::BetaVae => "beta_vae",
            ModelKind::BernoulliVae => "bernoulli_vae",
            ModelKind::Deen => "deen",
        }
    }

    pub fn is_vae(self) -> bool {
        self != ModelKind::Deen
    }
}

/// Noise-scale and KL-weight hyperparameters; unused entries are stored as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Network dimensions. For DEEN checkpoints `d_z` is 0 and
/// `encoder_hidden` holds the energy network's hidden widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub d: usize,
    pub d_z: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u32,
    pub lr: f64,
    pub batch_size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub shape: NetShape,
    pub params: ParamStore<f32>,
    pub meta: TrainingMeta,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{what} {v} exceeds u32")))
}

/// Serializes a checkpoint to bytes.
pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    // Writes into a Vec cannot fail.
    let w = &mut out;
    w.extend_from_slice(MAGIC);
    w.write_u32::<LE>(VERSION).unwrap();
    w.write_u8(ckpt.kind.code()).unwrap();
    for h in [ckpt.hyper.sigma, ckpt.hyper.alpha, ckpt.hyper.beta] {
        w.write_f64::<LE>(h).unwrap();
    }
    w.write_u32::<LE>(to_u32(ckpt.shape.d, "d")?).unwrap();
    w.write_u32::<LE>(to_u32(ckpt.shape.d_z, "d_z")?).unwrap();
    for widths in [&ckpt.shape.encoder_hidden, &ckpt.shape.decoder_hidden] {
        w.write_u32::<LE>(to_u32(widths.len(), "layer count")?).unwrap();
        for &wd in widths.iter() {
            w.write_u32::<LE>(to_u32(wd, "width")?).unwrap();
        }
    }
    w.write_u64::<LE>(ckpt.meta.seed).unwrap();
    w.write_u32::<LE>(ckpt.meta.epochs).unwrap();
    w.write_f64::<LE>(ckpt.meta.lr).unwrap();
    w.write_u32::<LE>(ckpt.meta.batch_size).unwrap();
    w.write_u32::<LE>(to_u32(ckpt.params.len(), "array count")?).unwrap();
    for (name, value) in ckpt.params.iter() {
        w.write_u32::<LE>(to_u32(name.len(), "name length")?).unwrap();
        w.extend_from_slice(name.as_bytes());
        w.write_u32::<LE>(2).unwrap();
        w.write_u32::<LE>(to_u32(value.nrows(), "dim")?).unwrap();
        w.write_u32::<LE>(to_u32(value.ncols(), "dim")?).unwrap();
        for &v in value.iter() {
            w.write_f32::<LE>(v).unwrap();
        }
    }
    Ok(out)
}

fn header_err(e: std::io::Error) -> Error {
    Error::CorruptArray(format!("truncated header: {e}"))
}

fn array_err(e: std::io::Error) -> Error {
    Error::CorruptArray(format!("truncated array section: {e}"))
}

/// Parses checkpoint bytes.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadMagic(magic))?;
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.read_u32::<LE>().map_err(header_err)?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let code = r.read_u8().map_err(header_err)?;
    let kind = ModelKind::from_code(code)
        .ok_or_else(|| Error::CorruptArray(format!("unknown model kind {code}")))?;
    let hyper = Hyper {
        sigma: r.read_f64::<LE>().map_err(header_err)?,
        alpha: r.read_f64::<LE>().map_err(header_err)?,
        beta: r.read_f64::<LE>().map_err(header_err)?,
    };
    let d = r.read_u32::<LE>().map_err(header_err)? as usize;
    let d_z = r.read_u32::<LE>().map_err(header_err)? as usize;
    let mut widths = [Vec::new(), Vec::new()];
    for ws in widths.iter_mut() {
        let n = r.read_u32::<LE>().map_err(header_err)? as usize;
        if n > 1024 {
            return Err(Error::CorruptArray(format!("implausible layer count {n}")));
        }
        for _ in 0..n {
            ws.push(r.read_u32::<LE>().map_err(header_err)? as usize);
        }
    }
    let [encoder_hidden, decoder_hidden] = widths;
    let meta = TrainingMeta {
        seed: r.read_u64::<LE>().map_err(header_err)?,
        epochs: r.read_u32::<LE>().map_err(header_err)?,
        lr: r.read_f64::<LE>().map_err(header_err)?,
        batch_size: r.read_u32::<LE>().map_err(header_err)?,
    };
    let n_arrays = r.read_u32::<LE>().map_err(array_err)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n_arrays {
        let name_len = r.read_u32::<LE>().map_err(array_err)? as usize;
        let remaining = bytes.len() - r.position() as usize;
        if name_len > remaining {
            return Err(Error::CorruptArray("name runs past end of file".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(array_err)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::CorruptArray("array name is not UTF-8".into()))?;
        let rank = r.read_u32::<LE>().map_err(array_err)?;
        let (rows, cols) = match rank {
            1 => (1, r.read_u32::<LE>().map_err(array_err)? as usize),
            2 => (
                r.read_u32::<LE>().map_err(array_err)? as usize,
                r.read_u32::<LE>().map_err(array_err)? as usize,
            ),
            _ => return Err(Error::CorruptArray(format!("unsupported rank {rank} for {name}"))),
        };
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CorruptArray(format!("dims overflow for {name}")))?;
        let remaining = bytes.len() - r.position() as usize;
        if count.saturating_mul(4) > remaining {
            return Err(Error::CorruptArray(format!(
                "array {name} declares {count} values, {} bytes remain",
                remaining
            )));
        }
        let mut values = vec![0f32; count];
        r.read_f32_into::<LE>(&mut values).map_err(array_err)?;
        let value = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::CorruptArray(e.to_string()))?;
        params
            .insert(&name, value)
            .map_err(|_| Error::CorruptArray(format!("duplicate array {name}")))?;
    }
    if (r.position() as usize) != bytes.len() {
        return Err(Error::CorruptArray("trailing bytes after last array".into()));
    }
    Ok(Checkpoint {
        kind,
        hyper,
        shape: NetShape {
            d,
            d_z,
            encoder_hidden,
            decoder_hidden,
        },
        params,
        meta,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, &write_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params
            .insert("encoder.0.weight", Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f32 * 0.25))
            .unwrap();
        params.insert("encoder.0.bias", Array2::from_elem((1, 2), -1.5)).unwrap();
        Checkpoint {
            kind: ModelKind::SigmaVae,
            hyper: Hyper { sigma: 0.9, alpha: 0.0, beta: 1.0 },
            shape: NetShape { d: 4, d_z: 2, encoder_hidden: vec![8, 4], decoder_hidden: vec![8] },
            params,
            meta: TrainingMeta { seed: 7, epochs: 3, lr: 1e-4, batch_size: 16 },
        }
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ivae");
        let c = sample();
        save_checkpoint(&c, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_checkpoint(&back).unwrap(), fs::read(&path).unwrap());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_checkpoint(&bytes), Err(Error::BadMagic(m)) if &m == b"XVAE"));
        assert!(matches!(read_checkpoint(b"IV"), Err(Error::BadMagic(_))));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(read_checkpoint(&bytes), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn truncated_array_section() {
        let bytes = write_checkpoint(&sample()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 9, bytes.len() - 30] {
            assert!(
                matches!(read_checkpoint(&bytes[..cut]), Err(Error::CorruptArray(_))),
                "cut {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra), Err(Error::CorruptArray(_))));
    }

    proptest! {
        #[test]
        fn byte_exact_roundtrip(
            values in proptest::collection::vec(any::<f32>(), 1..64),
            sigma in any::<f64>(),
            seed in any::<u64>(),
            kind in 0u8..5,
        ) {
            let mut params = ParamStore::new();
            let n = values.len();
            params.insert("w", Array2::from_shape_vec((1, n), values).unwrap()).unwrap();
            let c = Checkpoint {
                kind: ModelKind::from_code(kind).unwrap(),
                hyper: Hyper { sigma, alpha: 0.3, beta: 2.0 },
                shape: NetShape { d: n, d_z: 1, encoder_hidden: vec![n], decoder_hidden: vec![] },
                params,
                meta: TrainingMeta { seed, epochs: 1, lr: 0.5, batch_size: 2 },
            };
            let bytes = write_checkpoint(&c).unwrap();
            let again = write_checkpoint(&read_checkpoint(&bytes).unwrap()).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }
}
