//! Self-describing binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MASSNET\0"
//! version  u32
//! meta     u64 length + JSON (model config, optional preprocess config)
//! count    u64 number of tensors
//! tensor*  u64 path length + utf8 path
//!          u32 ndim, u64 x ndim dims
//!          f64 x prod(dims) values
//! ```
//!
//! Tensors are keyed by canonical layer path and cover both trainable
//! parameters and batch-norm running statistics, so save -> load reproduces
//! the model bit-exactly.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{MassNet, ModelConfig};
use crate::error::CheckpointError;
use crate::preprocess::PreprocessConfig;

const MAGIC: &[u8; 8] = b"MASSNET\0";
pub const CKPT_VERSION: u32 = 1;

/// Run context stored alongside the parameters so that a checkpoint is
/// usable stand-alone (e.g. by `massnet predict`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessConfig>,
    /// Dataset max used by per-dataset-max normalization at train time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_max: Option<f64>,
}

/// A loaded checkpoint: the model plus its stored context.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: MassNet,
    pub meta: CheckpointMeta,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serialize `model` (parameters + running stats) and `meta` to `path`.
pub fn save_checkpoint(
    model: &MassNet,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut model = model.clone();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());

    let meta_json =
        serde_json::to_vec(meta).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);

    let tensors = model.collect_all();
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, values) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        // stored flat; the config reconstructs shapes
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "unexpected end of file at offset {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Load a checkpoint, rebuilding the model from the stored config and filling
/// every tensor by path. Fails without partial state on any inconsistency.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };

    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            expected: CKPT_VERSION,
            found: version,
        });
    }

    let meta_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("meta: {e}")))?;

    let count = r.u64()? as usize;
    let mut stored: HashMap<String, Vec<f64>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| CheckpointError::Corrupt(format!("tensor name: {e}")))?;
        let ndim = r.u32()? as usize;
        let mut total = 1usize;
        for _ in 0..ndim {
            total = total.saturating_mul(r.u64()? as usize);
        }
        let raw = r.take(total * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if stored.insert(name.clone(), values).is_some() {
            return Err(CheckpointError::Corrupt(format!("duplicate tensor {name}")));
        }
    }

    let mut model = MassNet::init(&meta.model, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    {
        for (name, slot) in model.collect_all() {
            let values = stored
                .remove(&name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            if values.len() != slot.len() {
                return Err(CheckpointError::TensorSize {
                    path: name,
                    expected: slot.len(),
                    found: values.len(),
                });
            }
            slot.copy_from_slice(&values);
        }
    }
    if let Some(extra) = stored.keys().next() {
        return Err(CheckpointError::UnknownTensor(extra.clone()));
    }

    Ok(Checkpoint { model, meta })
}
