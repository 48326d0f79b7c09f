//! Binary tensor files: 4 magic bytes, `u32` rank, `u32` extents, then the
//! row-major payload, all little-endian. `MDT1` carries `f32` values and
//! `MDT2` carries `f64` values.

use std::fs;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC_F32: &[u8; 4] = b"MDT1";
pub const MAGIC_F64: &[u8; 4] = b"MDT2";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    F32,
    F64,
}

impl Payload {
    /// The payload that stores `S` without loss.
    pub fn native<S: Scalar>() -> Payload {
        if std::mem::size_of::<S>() == 4 {
            Payload::F32
        } else {
            Payload::F64
        }
    }
}

pub fn encode<S: Scalar>(t: &Tensor<S>, payload: Payload) -> Vec<u8> {
    let width = if payload == Payload::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + width * t.numel());
    out.extend_from_slice(if payload == Payload::F32 { MAGIC_F32 } else { MAGIC_F64 });
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in t.data() {
        match payload {
            Payload::F32 => out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes()),
            Payload::F64 => out.extend_from_slice(&x.as_f64().to_le_bytes()),
        }
    }
    out
}

fn format_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Format { offset, msg: msg.into() })
}

fn take<'a>(bytes: &'a [u8], at: usize, n: usize, what: &str) -> Result<&'a [u8]> {
    match bytes.get(at..at + n) {
        Some(s) => Ok(s),
        None => format_err(bytes.len(), format!("truncated {what}: need {n} bytes at offset {at}")),
    }
}

fn u32_at(bytes: &[u8], at: usize, what: &str) -> Result<usize> {
    let b = take(bytes, at, 4, what)?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<Tensor<S>> {
    let magic = take(bytes, 0, 4, "magic")?;
    let payload = match magic {
        m if m == MAGIC_F32 => Payload::F32,
        m if m == MAGIC_F64 => Payload::F64,
        m => return format_err(0, format!("bad magic {m:?}")),
    };
    let rank = u32_at(bytes, 4, "rank")?;
    if rank == 0 {
        return format_err(4, "rank 0");
    }
    let mut shape = Vec::with_capacity(rank.min(16));
    let mut numel: usize = 1;
    for i in 0..rank {
        let at = 8 + 4 * i;
        let d = u32_at(bytes, at, "extent")?;
        if d == 0 {
            return format_err(at, "zero extent");
        }
        numel = match numel.checked_mul(d) {
            Some(n) => n,
            None => return format_err(at, "element count overflows"),
        };
        shape.push(d);
    }
    let start = 8 + 4 * rank;
    let width = if payload == Payload::F32 { 4 } else { 8 };
    let need = numel.checked_mul(width).ok_or(TensorError::Format { offset: start, msg: "payload size overflows".into() })?;
    let body = take(bytes, start, need, "payload")?;
    if bytes.len() != start + need {
        return format_err(start + need, format!("{} trailing bytes", bytes.len() - start - need));
    }
    let data = match payload {
        Payload::F32 => body.chunks_exact(4).map(|c| S::of(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect(),
        Payload::F64 => body.chunks_exact(8).map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap()))).collect(),
    };
    Tensor::new(shape, data)
}

pub fn save<S: Scalar>(path: impl AsRef<Path>, t: &Tensor<S>, payload: Payload) -> Result<()> {
    fs::write(path, encode(t, payload))?;
    Ok(())
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<S>> {
    decode(&fs::read(path)?)
}
