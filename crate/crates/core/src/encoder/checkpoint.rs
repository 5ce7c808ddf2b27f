use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamWConfig, LinearSchedule, ModelConfig, ModelParams, OptimizerState};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"WEBLMCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    F32,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(DType::F64),
            1 => Ok(DType::F32),
            _ => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }
}

/// Named row-major tensor. Values are held as `f64`; `dtype` selects the
/// on-disk width.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

/// Raw checkpoint: a JSON metadata string followed by named tensors.
///
/// Layout (little endian): magic, `u32` version, `u64` metadata length,
/// metadata bytes, `u64` tensor count, then per tensor `u32` name length,
/// name, `u8` dtype, `u32` rank, `u64` dims, payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.meta);
        w.u64(self.tensors.len() as u64);
        for t in &self.tensors {
            w.u32(t.name.len() as u32);
            w.bytes(t.name.as_bytes());
            w.u8(t.dtype.code());
            w.u32(t.dims.len() as u32);
            for &d in &t.dims {
                w.u64(d as u64);
            }
            for &v in &t.data {
                match t.dtype {
                    DType::F64 => w.bytes(&v.to_le_bytes()),
                    DType::F32 => w.bytes(&(v as f32).to_le_bytes()),
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf, "checkpoint");
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta = r.str()?;
        let count = r.len()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?
                .to_string();
            let dtype = DType::from_code(r.u8()?)?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            let width = match dtype {
                DType::F64 => 8,
                DType::F32 => 4,
            };
            let bytes = r.take(
                n.checked_mul(width)
                    .ok_or_else(|| Error::Format("payload overflow".into()))?,
            )?;
            let data = match dtype {
                DType::F64 => bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                DType::F32 => bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect(),
            };
            tensors.push(Tensor {
                name,
                dims,
                dtype,
                data,
            });
        }
        r.finish()?;
        Ok(Self { meta, tensors })
    }

    /// Writes through a temporary file so an existing checkpoint survives a
    /// failed write.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Metadata echoed at the head of a training checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub adam: AdamWConfig,
    pub schedule: LinearSchedule,
    pub step: u64,
    pub dtype: DType,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Parameters plus optimizer state, enough to resume training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub config: ModelConfig,
    pub adam: AdamWConfig,
    pub schedule: LinearSchedule,
    pub params: ModelParams,
    pub opt: OptimizerState,
    pub extra: serde_json::Value,
}

fn push_all(out: &mut Vec<Tensor>, prefix: &str, params: &ModelParams, dtype: DType) {
    params.for_each(|name, t| {
        out.push(Tensor {
            name: format!("{prefix}{name}"),
            dims: t.shape().to_vec(),
            dtype,
            data: t.iter().copied().collect(),
        })
    });
}

fn fill(ckpt: &Checkpoint, prefix: &str, params: &mut ModelParams) -> Result<()> {
    let mut err = None;
    params.for_each_mut(|name, t| {
        if err.is_some() {
            return;
        }
        let full = format!("{prefix}{name}");
        match ckpt.tensor(&full) {
            Some(src) if src.dims == t.shape() => {
                for (dst, &v) in t.iter_mut().zip(&src.data) {
                    *dst = v;
                }
            }
            Some(src) => {
                err = Some(Error::Format(format!(
                    "tensor {full} has shape {:?}, expected {:?}",
                    src.dims,
                    t.shape()
                )))
            }
            None => err = Some(Error::Format(format!("checkpoint lacks tensor {full}"))),
        }
    });
    err.map_or(Ok(()), Err)
}

impl TrainingState {
    pub fn to_checkpoint(&self, dtype: DType) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            model: self.config.clone(),
            adam: self.adam.clone(),
            schedule: self.schedule,
            step: self.opt.step,
            dtype,
            extra: self.extra.clone(),
        };
        let meta = serde_json::to_string(&meta).map_err(|e| Error::Format(e.to_string()))?;
        let mut tensors = Vec::new();
        push_all(&mut tensors, "", &self.params, dtype);
        push_all(&mut tensors, "opt.m.", &self.opt.m, dtype);
        push_all(&mut tensors, "opt.v.", &self.opt.v, dtype);
        Ok(Checkpoint { meta, tensors })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta =
            serde_json::from_str(&ckpt.meta).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let mut params = ModelParams::zeros(&meta.model)?;
        let mut m = params.clone();
        let mut v = params.clone();
        fill(ckpt, "", &mut params)?;
        fill(ckpt, "opt.m.", &mut m)?;
        fill(ckpt, "opt.v.", &mut v)?;
        Ok(Self {
            config: meta.model,
            adam: meta.adam,
            schedule: meta.schedule,
            params,
            opt: OptimizerState { m, v, step: meta.step },
            extra: meta.extra,
        })
    }

    pub fn save(&self, path: &Path, dtype: DType) -> Result<()> {
        self.to_checkpoint(dtype)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
