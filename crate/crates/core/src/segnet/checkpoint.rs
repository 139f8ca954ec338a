//! Checkpoint container.
//!
//! ```text
//! "LEANETCK"            8-byte magic
//! u32 LE                format version
//! u64 LE                header length in bytes
//! header                UTF-8 JSON: {format_version, config, params: [{name, shape, group, trainable, offset, len}]}
//! payload               f64 LE values, concatenated in header order (offset/len count values)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkConfig, SegNet};
use crate::error::{Error, Result};
use crate::params::ParamGroup;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LEANETCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    group: ParamGroup,
    trainable: bool,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetworkConfig,
    params: Vec<ParamEntry>,
}

pub fn to_bytes(net: &SegNet) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (_, p) in net.params().iter() {
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            group: p.group,
            trainable: p.trainable,
            offset,
            len: p.value.len(),
        });
        offset += p.value.len();
    }
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        config: net.config().clone(),
        params: entries,
    })?;
    let mut out = Vec::with_capacity(20 + header.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, p) in net.params().iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Parse {
        offset: *pos,
        message: format!("truncated checkpoint while reading {what}"),
    })?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

/// Rebuild a network from checkpoint bytes. When `expected` is given, the
/// stored configuration must match it exactly.
pub fn from_bytes(bytes: &[u8], expected: Option<&NetworkConfig>) -> Result<SegNet> {
    let mut pos = 0;
    if take(bytes, &mut pos, 8, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a leanet checkpoint (bad magic)".into(),
        });
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            offset: 8,
            message: format!("unsupported checkpoint version {version} (expected {FORMAT_VERSION})"),
        });
    }
    let header_len = u64::from_le_bytes(take(bytes, &mut pos, 8, "header length")?.try_into().expect("8 bytes")) as usize;
    let header_start = pos;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, header_len, "header")?).map_err(|e| Error::Parse {
        offset: header_start,
        message: format!("bad checkpoint header: {e}"),
    })?;
    if let Some(exp) = expected {
        if exp != &header.config {
            return Err(Error::config("checkpoint configuration does not match the requested network"));
        }
    }
    let payload_start = pos;
    let mut net = SegNet::new(header.config)?;
    if header.params.len() != net.params().len() {
        return Err(Error::config(format!(
            "checkpoint has {} parameters, network defines {}",
            header.params.len(),
            net.params().len()
        )));
    }
    for entry in &header.params {
        let id = net
            .params()
            .find(&entry.name)
            .ok_or_else(|| Error::config(format!("checkpoint parameter `{}` unknown to network", entry.name)))?;
        let param = net.params_mut().get_mut(id);
        if param.value.shape() != entry.shape.as_slice() {
            return Err(Error::config(format!(
                "parameter `{}` has shape {:?} in checkpoint, {:?} in network",
                entry.name,
                entry.shape,
                param.value.shape()
            )));
        }
        let mut at = payload_start + entry.offset * 8;
        let raw = take(bytes, &mut at, entry.len * 8, &entry.name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        param.value = Tensor::from_vec(&entry.shape, data)?;
        param.trainable = entry.trainable;
    }
    Ok(net)
}

pub fn save(net: &SegNet, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, expected: Option<&NetworkConfig>) -> Result<SegNet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, expected)
}
