//! On-disk formats: the binary level-set dump and the contour JSON.
//!
//! Level-set dump layout, little-endian throughout:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 8     | magic `b"SEEDLSF1"`             |
//! | 4     | `N1` as u32                     |
//! | 4     | `N2` as u32                     |
//! | 8     | `L1` as f64                     |
//! | 8     | `L2` as f64                     |
//! | 8     | time as f64                     |
//! | 8 * n | node values, row-major, i fastest |

use std::path::Path;

use crate::contour::Polyline;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

pub const LEVEL_SET_MAGIC: &[u8; 8] = b"SEEDLSF1";
const HEADER_LEN: usize = 8 + 4 + 4 + 8 * 3;

pub fn encode_level_set(u: &GridField, time: f64) -> Vec<u8> {
    let spec = u.spec();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * spec.node_count());
    out.extend_from_slice(LEVEL_SET_MAGIC);
    out.extend_from_slice(&(spec.n1() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n2() as u32).to_le_bytes());
    for x in [spec.l1(), spec.l2(), time] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns the field and the time stamp.
pub fn decode_level_set(bytes: &[u8]) -> Result<(GridField, f64)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Dump(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != LEVEL_SET_MAGIC {
        return Err(Error::Dump("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let spec = GridSpec::new(f64_at(16), f64_at(24), u32_at(8), u32_at(12))?;
    let time = f64_at(32);
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * spec.node_count() {
        return Err(Error::Dump(format!(
            "expected {} value bytes, found {}",
            8 * spec.node_count(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((GridField::new(spec, values)?, time))
}

pub fn save_level_set(path: impl AsRef<Path>, u: &GridField, time: f64) -> Result<()> {
    std::fs::write(path, encode_level_set(u, time))?;
    Ok(())
}

pub fn load_level_set(path: impl AsRef<Path>) -> Result<(GridField, f64)> {
    decode_level_set(&std::fs::read(path)?)
}

/// Contour JSON: `[{"closed": bool, "points": [[x1, x2], ...]}, ...]`.
pub fn contour_to_json(lines: &[Polyline]) -> String {
    serde_json::to_string(lines).expect("polylines serialize")
}

pub fn contour_from_json(text: &str) -> Result<Vec<Polyline>> {
    serde_json::from_str(text).map_err(|e| Error::Decode(format!("contour JSON: {e}")))
}
