//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FSWPCKPT"
//! version  u32      currently 1
//! count    u32      number of parameters
//! repeated count times:
//!   name_len u32, name (UTF-8 bytes)
//!   ndim     u32, extents (u64 × ndim)
//!   values   f64 × ∏extents, row-major
//! ```

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::param::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FSWPCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name().as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        let shape = p.value().shape();
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.value().data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Read `(name, tensor)` pairs in file order.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Format("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(TensorError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u32(&mut input)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Format("parameter name is not UTF-8".into()))?;
        let ndim = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut input)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(read_u64(&mut input)?));
        }
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}
