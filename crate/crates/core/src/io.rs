//! DTN1 tensor container.
//!
//! Layout: the magic bytes `DTN1`, a little-endian `u32` axis count, one
//! little-endian `u64` extent per axis, then every element as a little-endian
//! IEEE-754 `f64` in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

pub const MAGIC: &[u8; 4] = b"DTN1";

pub fn write_tensor<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.ndims() as u32).to_le_bytes())?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected DTN1")));
    }
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "axis count")?;
    let ndims = u32::from_le_bytes(b4) as usize;
    if ndims == 0 {
        return Err(Error::Format("zero axes".into()));
    }
    let mut dims = Vec::with_capacity(ndims);
    let mut b8 = [0u8; 8];
    for _ in 0..ndims {
        read_exact(&mut r, &mut b8, "extent")?;
        let d = u64::from_le_bytes(b8);
        dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("extent {d} too large")))?);
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let mut bytes = Vec::new();
    r.take((total as u64).saturating_mul(8)).read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(Error::Format(format!(
            "truncated payload: expected {} bytes, found {}",
            total * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DenseTensor::new(dims, data)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated header ({what})")),
        _ => Error::Io(e),
    })
}

pub fn save_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    save_tensor(path, &DenseTensor::from_matrix(m))
}

/// Loads a two-way DTN1 file as a matrix.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let t = load_tensor(path)?;
    if t.ndims() != 2 {
        return Err(Error::Format(format!("expected a 2-way tensor, found dims {:?}", t.dims())));
    }
    let (r, c) = (t.dims()[0], t.dims()[1]);
    Matrix::new(r, c, t.into_data())
}
