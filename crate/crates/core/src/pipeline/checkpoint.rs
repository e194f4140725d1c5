//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic u32 = 0x48444135 | version u16
//! meta_len u32 | meta (UTF-8 TOML: config and training status)
//! entries u32 | per entry: name_len u16, name, rank u8, dims u32 × rank, offset u64
//! data: f64 values, each entry at its byte offset from the start of the data section
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::model::{HdaModel, TrainingStatus, PARAM_GROUPS};
use crate::error::{HdaError, Result};
use crate::nn::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: u32 = 0x4844_4135;
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    status: TrainingStatus,
    config: Config,
}

fn ck(msg: impl Into<String>) -> HdaError {
    HdaError::Checkpoint(msg.into())
}

pub fn encode_checkpoint(model: &HdaModel) -> Vec<u8> {
    let meta = toml::to_string(&Meta {
        status: model.status,
        config: model.config.clone(),
    })
    .expect("metadata is representable as TOML");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC.to_le_bytes());
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 8 * t.len() as u64;
    }
    for (_, t) in model.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ck("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<HdaModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.u32()? != CHECKPOINT_MAGIC {
        return Err(ck("not a checkpoint (bad magic)"));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(ck(format!(
            "incompatible checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|_| ck("metadata is not UTF-8"))?;
    let meta: Meta = toml::from_str(meta).map_err(|e| ck(format!("metadata: {e}")))?;
    meta.config.validate()?;
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| ck("parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        manifest.push((name, dims, offset));
    }
    let data = &bytes[r.pos..];
    let mut params = ParamStore::new();
    for (name, dims, offset) in manifest {
        let n: usize = dims.iter().product();
        let start = usize::try_from(offset).map_err(|_| ck("offset overflow"))?;
        let end = start
            .checked_add(8 * n)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| ck(format!("data for '{name}' runs past the end of the file")))?;
        let values = data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&dims, values).map_err(|e| ck(format!("'{name}': {e}")))?;
        params.insert(name, t);
    }
    let model = HdaModel {
        config: meta.config,
        params,
        status: meta.status,
    };
    check_complete(&model)?;
    Ok(model)
}

/// Every group must be present and match the shapes implied by the stored config.
fn check_complete(model: &HdaModel) -> Result<()> {
    let fresh = HdaModel::new(model.config.clone())?;
    for g in PARAM_GROUPS {
        let prefix = format!("{g}.");
        if model.params.count_with_prefix(&prefix) == 0 {
            return Err(ck(format!("missing parameter group '{g}'")));
        }
        for (name, t) in fresh.params.iter().filter(|(n, _)| n.starts_with(&prefix)) {
            match model.params.get(name) {
                None => return Err(ck(format!("group '{g}' lacks '{name}'"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(ck(format!(
                        "'{name}' is {:?}, config implies {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
    }
    if model.params.len() != fresh.params.len() {
        return Err(ck("checkpoint holds parameters the config does not define"));
    }
    Ok(())
}

pub fn save_checkpoint(model: &HdaModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model))
        .map_err(|e| ck(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<HdaModel> {
    let bytes = std::fs::read(path).map_err(|e| ck(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
