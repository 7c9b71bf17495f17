//! `V2VM` model files.
//!
//! ```text
//! magic "V2VM" | version u32 | layer count u32 |
//!   per layer: in_dim u32 | out_dim u32 | activation u8 (0 = ReLU, 1 = Linear) |
//!              weights f64[out_dim * in_dim] row-major | bias f64[out_dim]
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{Activation, Layer, Mlp};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"V2VM";
pub const MODEL_VERSION: u32 = 1;

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.parameter_count() * 8 + self.layers.len() * 9);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.push(match l.activation {
                Activation::Relu => 0,
                Activation::Linear => 1,
            });
            for w in l.weights.as_slice() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != MODEL_MAGIC {
            return Err(Error::parse(0, "bad magic (expected V2VM)"));
        }
        let version = r.u32("version")?;
        if version != MODEL_VERSION {
            return Err(Error::Version {
                what: "model",
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let count = r.u32("layer count")? as usize;
        if count == 0 {
            return Err(Error::parse(8, "model has no layers"));
        }
        let mut layers = Vec::with_capacity(count.min(1024));
        for k in 0..count {
            let at = r.offset();
            let in_dim = r.u32("in_dim")? as usize;
            let out_dim = r.u32("out_dim")? as usize;
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::parse(
                    at as u64,
                    format!("layer {k} has a zero dimension"),
                ));
            }
            let act_at = r.offset();
            let activation = match r.take(1, "activation")?[0] {
                0 => Activation::Relu,
                1 => Activation::Linear,
                other => {
                    return Err(Error::parse(
                        act_at as u64,
                        format!("unknown activation code {other}"),
                    ))
                }
            };
            let weights = r.f64s(in_dim * out_dim, "weights")?;
            let bias = r.f64s(out_dim, "bias")?;
            let weights = Matrix::new(out_dim, in_dim, weights)
                .map_err(|e| Error::parse(at as u64, format!("layer {k}: {e}")))?;
            layers.push(
                Layer::new(weights, bias, activation)
                    .map_err(|e| Error::parse(at as u64, e.to_string()))?,
            );
        }
        if r.offset() != bytes.len() {
            return Err(Error::parse(
                r.offset() as u64,
                "trailing bytes after last layer",
            ));
        }
        Mlp::from_layers(layers).map_err(|e| Error::parse(12, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
        Mlp::from_bytes(&std::fs::read(path)?)
    }
}

/// Little-endian cursor that reports the offset of the first missing byte.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(
                self.bytes.len() as u64,
                format!(
                    "truncated while reading {what} (needed {n} bytes at offset {})",
                    self.pos
                ),
            )),
        }
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::parse(self.pos as u64, "size overflow"))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::parse(self.pos as u64, "size overflow"))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
