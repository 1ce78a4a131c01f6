//! Binary checkpoints: magic, version, the configuration as text, then
//! every parameter in allocation order as little-endian `f32`.

use std::io::{Read, Write};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SUMF";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<F: Real>(mut w: impl Write, cfg: &ModelConfig, store: &ParamStore<F>) -> Result<()> {
    let text = cfg.to_text();
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    let mut buf = Vec::with_capacity(4 * store.scalar_count());
    for p in store.iter() {
        for v in p.value.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], section: &'static str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Truncated {
                    section,
                    expected: buf.len(),
                    found: filled,
                })
            }
            n => filled += n,
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read, section: &'static str) -> Result<u32> {
    let mut b = [0; 4];
    read_exact_or(r, &mut b, section)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a checkpoint and rebuilds its model layout.
pub fn read_checkpoint<F: Real>(mut r: impl Read) -> Result<(Model, ParamStore<F>)> {
    let mut magic = [0; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let len = read_u32(&mut r, "config length")? as usize;
    let mut text = vec![0; len];
    read_exact_or(&mut r, &mut text, "config")?;
    let text = String::from_utf8(text).map_err(|_| Error::Config("checkpoint config is not UTF-8".into()))?;
    let cfg = ModelConfig::from_text(&text)?;
    let (model, mut store) = Model::init::<F>(&cfg, 0)?;
    let mut bytes = vec![0; 4 * store.scalar_count()];
    read_exact_or(&mut r, &mut bytes, "parameters")?;
    let mut values = bytes.chunks_exact(4).map(|c| F::cast(f32::from_le_bytes(c.try_into().unwrap()) as f64));
    for p in store.iter_mut() {
        let shape = p.value.shape().to_vec();
        let data: Vec<F> = values.by_ref().take(p.value.len()).collect();
        p.value = Tensor::new(shape, data)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Config("trailing bytes after checkpoint parameters".into()));
    }
    Ok((model, store))
}
