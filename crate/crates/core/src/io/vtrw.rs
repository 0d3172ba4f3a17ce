//! `VTRW` weight container: config header, tensor directory, f32 payload.
//!
//! ```text
//! "VTRW"  u32 version (= 1)
//! u32 × 11 config: image_height image_width channels patch num_shifts
//!                  shift_magnitude hidden_dim depth heads mlp_ratio num_classes
//! u32 tensor_count
//! per tensor: u32 name_len  name (UTF-8)  u32 rank  u32 dims[rank]  u64 offset
//! f32 payload
//! ```
//!
//! Offsets are bytes from the start of the payload. Tensors are stored
//! back to back in directory order, so offset `k` equals the summed byte
//! size of tensors `0..k`. Directory names and shapes must match the
//! embedded config exactly.

use std::path::Path;

use super::bytes::{element_count, put_f32s, put_u32, put_u64, to_u32, Reader};
use crate::error::{Error, FormatError, Result};
use crate::model::{NamedTensor, VtrConfig, WeightSet};
use crate::scalar::Scalar;

pub const VTRW_MAGIC: &[u8; 4] = b"VTRW";
pub const VTRW_VERSION: u32 = 1;

fn config_fields(cfg: &VtrConfig) -> [usize; 11] {
    [
        cfg.image_height,
        cfg.image_width,
        cfg.channels,
        cfg.patch,
        cfg.num_shifts,
        cfg.shift_magnitude,
        cfg.hidden_dim,
        cfg.depth,
        cfg.heads,
        cfg.mlp_ratio,
        cfg.num_classes,
    ]
}

fn config_from_fields(f: [usize; 11]) -> VtrConfig {
    VtrConfig {
        image_height: f[0],
        image_width: f[1],
        channels: f[2],
        patch: f[3],
        num_shifts: f[4],
        shift_magnitude: f[5],
        hidden_dim: f[6],
        depth: f[7],
        heads: f[8],
        mlp_ratio: f[9],
        num_classes: f[10],
    }
}

pub fn encode_weights<T: Scalar>(w: &WeightSet<T>, cfg: &VtrConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    w.check_shapes(cfg)?;
    let tensors = w.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(VTRW_MAGIC);
    put_u32(&mut out, VTRW_VERSION);
    for v in config_fields(cfg) {
        put_u32(&mut out, to_u32(v, "config field")?);
    }
    put_u32(&mut out, to_u32(tensors.len(), "tensor count")?);
    let mut offset = 0u64;
    for t in &tensors {
        put_u32(&mut out, to_u32(t.name.len(), "name length")?);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, to_u32(t.dims.len(), "rank")?);
        for &d in &t.dims {
            put_u32(&mut out, to_u32(d, "dim")?);
        }
        put_u64(&mut out, offset);
        offset += 4 * t.values.len() as u64;
    }
    for t in &tensors {
        put_f32s(&mut out, t.values.iter().map(|v| v.as_f64() as f32));
    }
    Ok(out)
}

struct Entry {
    name: String,
    dims: Vec<usize>,
    offset: u64,
}

pub fn decode_weights<T: Scalar>(bytes: &[u8]) -> Result<(WeightSet<T>, VtrConfig)> {
    let mut r = Reader::new(bytes);
    r.magic(VTRW_MAGIC)?;
    let version = r.u32()?;
    if version != VTRW_VERSION {
        return Err(FormatError::VersionMismatch {
            expected: VTRW_VERSION,
            found: version,
        }
        .into());
    }
    let mut fields = [0usize; 11];
    for f in &mut fields {
        *f = r.u32()? as usize;
    }
    let cfg = config_from_fields(fields);
    cfg.validate()
        .map_err(|e| FormatError::Header(format!("embedded config rejected: {e}")))?;

    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::DirectoryLayout("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let offset = r.u64()?;
        entries.push(Entry { name, dims, offset });
    }

    let mut expected = 0u64;
    for e in &entries {
        if e.offset != expected {
            let kind = if e.offset < expected { "overlaps" } else { "leaves a gap before" };
            return Err(FormatError::DirectoryLayout(format!(
                "tensor {} at offset {} {} byte {expected}",
                e.name, e.offset, kind
            ))
            .into());
        }
        expected += 4 * element_count(&e.dims)? as u64;
    }

    let payload_start = r.position();
    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let n = element_count(&e.dims)?;
        let values = r.f32s(n)?;
        debug_assert_eq!((r.position() - payload_start) as u64, e.offset + 4 * n as u64);
        tensors.push(NamedTensor {
            name: e.name,
            dims: e.dims,
            values: values.into_iter().map(|v| T::of(v as f64)).collect(),
        });
    }
    r.finish()?;
    let w = WeightSet::from_named(&cfg, tensors)?;
    Ok((w, cfg))
}

pub fn save_weights<T: Scalar>(w: &WeightSet<T>, cfg: &VtrConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_weights(w, cfg).map_err(|e| e.at(path))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(WeightSet<T>, VtrConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes).map_err(|e| e.at(path))
}
