//! BHM4 binary field files.
//!
//! Layout: magic `BHM4`, then little-endian u32 version, u32 component count,
//! u32 nodes per axis, f64 spacing and n⁴·k f64 values, NaN at masked nodes.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BallGrid4, Field};
use crate::error::{Error, Result};

pub const BHM4_MAGIC: [u8; 4] = *b"BHM4";
pub const BHM4_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

pub fn encode_bhm4(u: &Field) -> Vec<u8> {
    let grid = u.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + u.values().len() * 8);
    buf.extend_from_slice(&BHM4_MAGIC);
    buf.extend_from_slice(&BHM4_VERSION.to_le_bytes());
    buf.extend_from_slice(&(u.components() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.h().to_le_bytes());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_bhm4(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER_LEN || bytes[..4] != BHM4_MAGIC {
        return Err(Error::InputMissing("not a BHM4 file".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != BHM4_VERSION {
        return Err(Error::InputMissing(format!("unsupported BHM4 version {version}")));
    }
    let k = word(8) as usize;
    let n = word(12) as usize;
    let h = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let count = n.checked_pow(4).and_then(|v| v.checked_mul(k));
    let count = count.ok_or_else(|| Error::InputMissing("BHM4 header overflows".into()))?;
    if k == 0 || bytes.len() != HEADER_LEN + count * 8 {
        return Err(Error::InputMissing(format!(
            "BHM4 payload has {} bytes, header implies {}",
            bytes.len() - HEADER_LEN,
            count * 8
        )));
    }
    let grid = BallGrid4::from_lattice(n, h)?;
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_values(&grid, k, values)
}

/// Writes via a temporary sibling file and rename, so readers never see a
/// partial file.
pub fn write_bhm4(path: &Path, u: &Field) -> Result<()> {
    let tmp = path.with_extension("bhm4.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode_bhm4(u))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_bhm4(path: &Path) -> Result<Field> {
    let bytes = fs::read(path)
        .map_err(|e| Error::InputMissing(format!("{}: {e}", path.display())))?;
    decode_bhm4(&bytes)
}
