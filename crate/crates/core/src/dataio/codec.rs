//! Run-length mask container.
//!
//! ```text
//! "LMSK"   magic
//! u16 LE   version (1)
//! u32 LE   K, H, W
//! K times: u32 LE run count, then (u32 start, u32 len) pairs over the row-major plane
//! ```

use crate::error::{Error, Result};
use crate::mask::MultiLabelMask;

pub const MAGIC: &[u8; 4] = b"LMSK";
pub const VERSION: u16 = 1;

/// Maximal runs of set pixels in a row-major plane.
pub fn runs(plane: &[u8]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < plane.len() {
        if plane[i] != 0 {
            let start = i;
            while i < plane.len() && plane[i] != 0 {
                i += 1;
            }
            out.push((start as u32, (i - start) as u32));
        } else {
            i += 1;
        }
    }
    out
}

pub fn encode_mask(mask: &MultiLabelMask) -> Vec<u8> {
    let (k, h, w) = mask.dims();
    let mut out = Vec::with_capacity(18 + k * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [k, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for c in 0..k {
        let r = runs(mask.plane(c));
        out.extend_from_slice(&(r.len() as u32).to_le_bytes());
        for (start, len) in r {
            out.extend_from_slice(&start.to_le_bytes());
            out.extend_from_slice(&len.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated mask stream while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_mask(bytes: &[u8]) -> Result<MultiLabelMask> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a mask stream (bad magic)".into(),
        });
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported mask version {version} (expected {VERSION})"),
        });
    }
    let k = r.u32("class count")? as usize;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let n = h
        .checked_mul(w)
        .filter(|&n| n.checked_mul(k).is_some_and(|t| t <= 1 << 32))
        .ok_or_else(|| Error::Parse {
            offset: 6,
            message: format!("implausible mask dimensions {k}x{h}x{w}"),
        })?;
    let mut mask = MultiLabelMask::new(k, h, w);
    for c in 0..k {
        let count = r.u32("run count")?;
        let plane = mask.plane_mut(c);
        let mut prev_end = 0usize;
        for _ in 0..count {
            let at = r.pos;
            let start = r.u32("run start")? as usize;
            let len = r.u32("run length")? as usize;
            if len == 0 || start < prev_end || start + len > n {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("invalid run ({start}, {len}) in class {c}"),
                });
            }
            plane[start..start + len].fill(1);
            prev_end = start + len;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: "trailing bytes after mask stream".into(),
        });
    }
    Ok(mask)
}
