//! Flat binary tensor dumps: four little-endian `u32` dims `(n, c, h, w)`
//! followed by the data as little-endian `f32`, row-major.

use std::fs;
use std::path::Path;

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

pub fn write_dump<T: Scalar>(path: impl AsRef<Path>, t: &Tensor4<T>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + 4 * t.data().len());
    for d in t.shape().to_array() {
        let d = u32::try_from(d).map_err(|_| Error::shape(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_dump<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor4<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::parse(path, "header", "file shorter than 16 bytes"));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    }
    let payload = &bytes[16..];
    let count: usize = dims.iter().product();
    if payload.len() != 4 * count {
        return Err(Error::parse(
            path,
            "payload",
            format!("{} bytes for {count} f32 elements", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Tensor4::from_vec(dims, data)
}
