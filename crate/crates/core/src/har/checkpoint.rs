//! Binary model container.
//!
//! ```text
//! "EQMC" | u32 version | u64 n | n bytes of JSON metadata
//! u32 tensor count, then per tensor:
//!   u32 name length | name | u32 rank | rank x u64 dims | f64 values
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Standardizer, WindowConfig};
use super::model::{ModelConfig, ModelParams};
use super::train::TrainConfig;
use super::Classifier;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EQMC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    track: String,
    vocab: Vec<String>,
    stats: Standardizer,
    windows: WindowConfig,
    model: ModelConfig,
    train: TrainConfig,
    seed: u64,
    steps: usize,
    channels: usize,
}

pub fn encode(c: &Classifier) -> Vec<u8> {
    let meta = Metadata {
        track: c.track.clone(),
        vocab: c.vocab.clone(),
        stats: c.stats.clone(),
        windows: c.windows.clone(),
        model: c.params.config.clone(),
        train: c.train.clone(),
        seed: c.seed,
        steps: c.params.steps,
        channels: c.params.channels,
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(64 + json.len() + 8 * c.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(c.params.layout.tensors.len() as u32).to_le_bytes());
    for t in &c.params.layout.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &c.params.values[t.offset..t.offset + t.size()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::BadCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::BadCheckpoint("length overflow".into()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Classifier> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::BadCheckpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let n = r.len()?;
    let meta: Metadata =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::BadCheckpoint(format!("metadata: {e}")))?;
    let mut params = ModelParams::init(&meta.model, meta.steps, meta.channels, meta.vocab.len(), 0)
        .map_err(|e| Error::BadCheckpoint(e.to_string()))?;
    if meta.stats.channels.len() != meta.channels {
        return Err(Error::BadCheckpoint("channel statistics do not match the model input".into()));
    }
    let count = r.u32()? as usize;
    if count != params.layout.tensors.len() {
        return Err(Error::BadCheckpoint(format!(
            "{count} tensors stored, layout has {}",
            params.layout.tensors.len()
        )));
    }
    for spec in params.layout.tensors.clone() {
        let nl = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nl)?).map_err(|_| Error::BadCheckpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::BadCheckpoint(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<usize>>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(Error::BadCheckpoint(format!(
                "tensor {name} {shape:?} where {} {:?} was expected",
                spec.name, spec.shape
            )));
        }
        let data = r.take(spec.size() * 8)?;
        for (v, b) in params.values[spec.offset..spec.offset + spec.size()].iter_mut().zip(data.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::BadCheckpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    if !params.is_finite() {
        return Err(Error::BadCheckpoint("non-finite parameters".into()));
    }
    Ok(Classifier {
        track: meta.track,
        vocab: meta.vocab,
        stats: meta.stats,
        windows: meta.windows,
        train: meta.train,
        seed: meta.seed,
        params,
    })
}

pub fn save(path: &Path, c: &Classifier) -> Result<()> {
    std::fs::write(path, encode(c)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Classifier> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
