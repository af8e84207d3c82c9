//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field                                         |
//! |-------|-----------------------------------------------|
//! | 8     | magic `HADLCKPT`                              |
//! | 4     | format version (`u32`, currently 1)           |
//! | 1     | use_haar (0/1)                                |
//! | 1     | use_dct (0/1)                                 |
//! | 1     | head kind (0 = low-rank, 1 = dense)           |
//! | 1     | has_bias (0/1)                                |
//! | 8     | lookback `L` (`u64`)                          |
//! | 8     | horizon `H` (`u64`)                           |
//! | 8     | rank `r` (`u64`, 0 for dense)                 |
//! | 8     | init seed (`u64`)                             |
//! | ...   | `P` (d_in·r) then `Q` (r·H), or `W` (d_in·H)  |
//! | ...   | bias (H), only if has_bias                    |
//!
//! Matrices are row-major `f64` bit patterns, so a load of a save is exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{HadlModel, Head, HeadKind};
use crate::error::{HadlError, Result};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"HADLCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &HadlModel, mut w: W) -> Result<()> {
    let v = model.variant();
    let rank = match v.head {
        HeadKind::LowRank(r) => r as u64,
        HeadKind::Dense => 0,
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[
        v.use_haar as u8,
        v.use_dct as u8,
        matches!(v.head, HeadKind::Dense) as u8,
        v.bias as u8,
    ])?;
    for n in [model.lookback() as u64, model.horizon() as u64, rank, model.seed()] {
        w.write_all(&n.to_le_bytes())?;
    }
    for tensor in model.params() {
        for x in tensor {
            w.write_all(&x.to_bits().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(model: &HadlModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f64::from_bits(read_u64(r)?));
    }
    Ok(out)
}

fn flag(b: u8, name: &str) -> Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(HadlError::Checkpoint(format!("invalid {name} byte {b}"))),
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<HadlModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| HadlError::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(HadlError::Checkpoint("bad magic".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != VERSION {
        return Err(HadlError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags)?;
    let use_haar = flag(flags[0], "use_haar")?;
    let use_dct = flag(flags[1], "use_dct")?;
    let dense = flag(flags[2], "head")?;
    let has_bias = flag(flags[3], "has_bias")?;
    let lookback = read_u64(&mut r)? as usize;
    let horizon = read_u64(&mut r)? as usize;
    let rank = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;

    let d_in = if use_haar { lookback / 2 } else { lookback };
    let head = if dense {
        Head::Dense {
            w: Matrix::from_vec(d_in, horizon, read_f64s(&mut r, d_in * horizon)?)?,
        }
    } else {
        let p = Matrix::from_vec(d_in, rank, read_f64s(&mut r, d_in * rank)?)?;
        let q = Matrix::from_vec(rank, horizon, read_f64s(&mut r, rank * horizon)?)?;
        Head::LowRank { p, q }
    };
    let bias = if has_bias {
        Some(read_f64s(&mut r, horizon)?)
    } else {
        None
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(HadlError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    HadlModel::from_parts(lookback, horizon, use_haar, use_dct, head, bias, seed)
}

pub fn load_checkpoint(path: &Path) -> Result<HadlModel> {
    let bytes = fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}
