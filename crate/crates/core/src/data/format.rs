//! The `SMVS` grid-series file: a fixed little-endian header followed by
//! the `T·C·H·W` float32 payload in `(t, c, h, w)` order.

use std::fs;
use std::path::Path;

use crate::embedding::GridSeries;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const SERIES_MAGIC: [u8; 4] = *b"SMVS";
pub const SERIES_VERSION: u32 = 1;
/// Magic, version and six `u32` fields.
pub const HEADER_LEN: usize = 4 + 4 * 7;

pub fn encode_grid_series(g: &GridSeries<f32>) -> Vec<u8> {
    let (t, c, h, w) = g.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * g.values().len());
    out.extend_from_slice(&SERIES_MAGIC);
    for v in [SERIES_VERSION, t as u32, c as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(g.steps_per_day() as u32).to_le_bytes());
    out.extend_from_slice(&(g.steps_per_week() as u32).to_le_bytes());
    for v in g.values().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], field: usize) -> u32 {
    let at = 4 + 4 * field;
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_grid_series(bytes: &[u8]) -> Result<GridSeries<f32>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            section: "magic",
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != SERIES_MAGIC {
        return Err(Error::BadMagic {
            expected: SERIES_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            section: "header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u32_at(bytes, 0);
    if version != SERIES_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: SERIES_VERSION,
        });
    }
    let [t, c, h, w, spd, spw] = [1, 2, 3, 4, 5, 6].map(|f| u32_at(bytes, f) as usize);
    if spw != 7 * spd {
        return Err(Error::Config(format!(
            "steps_per_week {spw} is not 7 × steps_per_day {spd}"
        )));
    }
    let count = t * c * h * w;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < 4 * count {
        return Err(Error::Truncated {
            section: "payload",
            expected: 4 * count,
            found: payload.len(),
        });
    }
    if payload.len() > 4 * count {
        return Err(Error::Config(format!(
            "{} trailing bytes after payload",
            payload.len() - 4 * count
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    GridSeries::new(Tensor::new([t, c, h, w], data)?, spd)
}

pub fn write_grid_series(path: impl AsRef<Path>, g: &GridSeries<f32>) -> Result<()> {
    fs::write(path, encode_grid_series(g))?;
    Ok(())
}

pub fn read_grid_series(path: impl AsRef<Path>) -> Result<GridSeries<f32>> {
    decode_grid_series(&fs::read(path)?)
}

/// Wraps a headerless little-endian float32 raster dump of shape
/// `dims = (T, C, H, W)`.
pub fn convert_raw(raw: &[u8], dims: [usize; 4], steps_per_day: usize) -> Result<GridSeries<f32>> {
    let count: usize = dims.iter().product();
    if raw.len() != 4 * count {
        return Err(Error::Truncated {
            section: "raw payload",
            expected: 4 * count,
            found: raw.len(),
        });
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    GridSeries::new(Tensor::new(dims, data)?, steps_per_day)
}
