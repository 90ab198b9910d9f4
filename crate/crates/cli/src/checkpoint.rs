//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "PCASTCKP" | version u32 | meta_len u64 | meta (JSON)
//! n_arrays u32 | n_arrays x (name_len u32 | name | rows u64 | cols u64)
//! has_optimizer u8
//! parameter payload: f64 LE, arrays in manifest order, row-major
//! [if has_optimizer] adam_t u64 | first moments | second moments
//! ```

use std::path::Path;

use patchcast_core::model::{ModelConfig, ModelParameters};
use patchcast_core::tensor::Tensor;
use patchcast_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 8] = b"PCASTCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tool_version: String,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    /// Training steps completed.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParameters,
    pub optimizer: Option<OptimizerState>,
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    for x in &t.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("checkpoint metadata serializes");
        let mut buf = Vec::with_capacity(64 + meta.len() + 8 * self.params.num_scalars() * 3);
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        put_u64(&mut buf, meta.len() as u64);
        buf.extend_from_slice(&meta);
        put_u32(&mut buf, self.params.count() as u32);
        self.params.visit(|name, t| {
            put_u32(&mut buf, name.len() as u32);
            buf.extend_from_slice(name.as_bytes());
            put_u64(&mut buf, t.rows as u64);
            put_u64(&mut buf, t.cols as u64);
        });
        buf.push(self.optimizer.is_some() as u8);
        self.params.visit(|_, t| put_tensor(&mut buf, t));
        if let Some(opt) = &self.optimizer {
            put_u64(&mut buf, opt.t);
            opt.m.iter().chain(&opt.v).for_each(|t| put_tensor(&mut buf, t));
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let meta_len = r.u64()? as usize;
        let mut meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| format!("bad checkpoint metadata: {e}"))?;
        if let Some(train) = &mut meta.train {
            train.seed = meta.seed;
        }
        meta.model.validate().map_err(|e| e.to_string())?;
        let n = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "array name is not UTF-8")?;
            manifest.push((name, r.u64()? as usize, r.u64()? as usize));
        }
        let mut params = ModelParameters::zeros(&meta.model);
        let mut expected = Vec::new();
        params.visit(|name, t| expected.push((name.to_string(), t.rows, t.cols)));
        if manifest.len() != expected.len() {
            return Err(format!("checkpoint has {} arrays, config expects {}", manifest.len(), expected.len()));
        }
        for (got, want) in manifest.iter().zip(&expected) {
            if got != want {
                return Err(format!(
                    "checkpoint array {} is {}x{}, config expects {} with shape {}x{}",
                    got.0, got.1, got.2, want.0, want.1, want.2
                ));
            }
        }
        let has_opt = r.take(1)?[0] != 0;
        let mut status = Ok(());
        params.visit_mut(|t| {
            if status.is_ok() {
                status = r.fill(t);
            }
        });
        status?;
        let optimizer = if has_opt {
            let t = r.u64()?;
            let mut read_all = || -> Result<Vec<Tensor>, String> {
                expected
                    .iter()
                    .map(|(_, rows, cols)| {
                        let mut z = Tensor::zeros(*rows, *cols);
                        r.fill(&mut z)?;
                        Ok(z)
                    })
                    .collect()
            };
            let m = read_all()?;
            let v = read_all()?;
            Some(OptimizerState { t, m, v })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes after payload", bytes.len() - r.pos));
        }
        Ok(Self { meta, params, optimizer })
    }

    /// Writes via a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Runtime(format!("checkpoint not found: {}", path.display()))
            } else {
                CliError::io(path, e)
            }
        })?;
        Self::from_bytes(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("checkpoint is truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, t: &mut Tensor) -> Result<(), String> {
        let bytes = self.take(8 * t.data.len())?;
        for (x, b) in t.data.iter_mut().zip(bytes.chunks_exact(8)) {
            *x = f64::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { patch_len: 4, d_model: 8, n_blocks: 1, n_heads: 2, d_ff: 16, max_context: 16, max_output_patches: 2, ..Default::default() }
    }

    fn checkpoint() -> Checkpoint {
        let model = small();
        let mut params = ModelParameters::zeros(&model);
        let mut k = 0.0;
        params.visit_mut(|t| {
            for x in &mut t.data {
                k += 1.0;
                *x = (k * 0.37_f64).sin() / 3.0;
            }
        });
        let meta = CheckpointMeta { tool_version: "test".into(), model, train: None, seed: 1, step: 0 };
        Checkpoint { meta, params, optimizer: None }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ck = checkpoint();
        let mut bytes = ck.to_bytes();
        let mut other = ck.clone();
        other.meta.model.d_ff = 32;
        let meta = serde_json::to_vec(&other.meta).unwrap();
        let old_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        bytes.splice(12..20 + old_len, (meta.len() as u64).to_le_bytes().into_iter().chain(meta));
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.contains("config expects"), "{err}");
    }

    #[test]
    fn truncation_and_garbage_are_rejected() {
        let bytes = checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err().contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).unwrap_err().contains("trailing"));
        assert!(Checkpoint::from_bytes(b"hello world, not a checkpoint").is_err());
    }

    #[test]
    fn payload_is_little_endian_f64() {
        let ck = checkpoint();
        let bytes = ck.to_bytes();
        let first = ck.params.input.hidden_w.data[0];
        let tail_len = 8 * ck.params.num_scalars();
        let start = bytes.len() - tail_len;
        assert_eq!(&bytes[start..start + 8], &first.to_le_bytes());
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn metadata_floats_survive_exactly() {
        let mut ck = checkpoint();
        ck.meta.seed = 42;
        ck.meta.train = Some(TrainConfig { seed: 42, ..Default::default() });
        ck.meta.model.rope_base = 10_000.0 / 3.0;
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap().meta, ck.meta);
    }
}
