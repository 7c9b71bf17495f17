//! `V2VF` feature shards and `V2VS` statistics files.
//!
//! ```text
//! V2VF: magic | version u32 | rows u32 | d_in u32 | d_out u32 | digest [u8; 32] |
//!       inputs f32[rows * d_in] | targets f32[rows * d_out]
//! V2VS: magic | version u32 | dim u32 | first f64[dim] | second f64[dim]
//! ```
//! Little-endian throughout. A `V2VS` file holds `(mean, std)` for
//! normalization statistics and `(reference_std, produced_std)` for variance
//! equalization.

use std::path::Path;

use crate::dsp::{GvStats, NormStats};
use crate::error::{Error, Result};
use crate::network::ByteReader;
use crate::numerics::Vector;

pub const SHARD_MAGIC: &[u8; 4] = b"V2VF";
pub const SHARD_VERSION: u32 = 1;
pub const STATS_MAGIC: &[u8; 4] = b"V2VS";
pub const STATS_VERSION: u32 = 1;

/// Paired training rows stored at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureShard {
    rows: usize,
    d_in: usize,
    d_out: usize,
    inputs: Vec<f32>,
    targets: Vec<f32>,
    provenance: [u8; 32],
}

impl FeatureShard {
    pub fn new(
        d_in: usize,
        d_out: usize,
        inputs: Vec<f32>,
        targets: Vec<f32>,
        provenance: [u8; 32],
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::contract("shard dimensions must be positive"));
        }
        if inputs.len() % d_in != 0 || targets.len() % d_out != 0 {
            return Err(Error::contract("shard buffers are not whole rows"));
        }
        let rows = inputs.len() / d_in;
        if targets.len() / d_out != rows {
            return Err(Error::contract(format!(
                "shard has {rows} input rows but {} target rows",
                targets.len() / d_out
            )));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::contract("shard entries must be finite"));
        }
        Ok(FeatureShard {
            rows,
            d_in,
            d_out,
            inputs,
            targets,
            provenance,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn provenance(&self) -> &[u8; 32] {
        &self.provenance
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i * self.d_out..(i + 1) * self.d_out]
    }

    pub fn inputs_f64(&self) -> Vec<Vec<f64>> {
        widen(&self.inputs, self.d_in)
    }

    pub fn targets_f64(&self) -> Vec<Vec<f64>> {
        widen(&self.targets, self.d_out)
    }

    /// Rows `range` as a new shard with the same provenance.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<FeatureShard> {
        if range.end > self.rows || range.start > range.end {
            return Err(Error::contract(format!(
                "row range {range:?} outside 0..{}",
                self.rows
            )));
        }
        FeatureShard::new(
            self.d_in,
            self.d_out,
            self.inputs[range.start * self.d_in..range.end * self.d_in].to_vec(),
            self.targets[range.start * self.d_out..range.end * self.d_out].to_vec(),
            self.provenance,
        )
    }

    /// Checks `d_in == context · bins (+ bins with NAT)` and `d_out == bins`.
    pub fn check_layout(&self, context: usize, bins: usize, nat: bool) -> Result<()> {
        let expected = context * bins + if nat { bins } else { 0 };
        if self.d_in != expected || self.d_out != bins {
            return Err(Error::contract(format!(
                "shard is {}->{} but context {context}, {bins} bins, NAT {} needs {expected}->{bins}",
                self.d_in,
                self.d_out,
                if nat { "on" } else { "off" }
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(52 + 4 * (self.inputs.len() + self.targets.len()));
        out.extend_from_slice(SHARD_MAGIC);
        for v in [
            SHARD_VERSION,
            self.rows as u32,
            self.d_in as u32,
            self.d_out as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.provenance);
        for v in self.inputs.iter().chain(&self.targets) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != SHARD_MAGIC {
            return Err(Error::parse(0, "bad magic (expected V2VF)"));
        }
        let version = r.u32("version")?;
        if version != SHARD_VERSION {
            return Err(Error::Version {
                what: "shard",
                found: version,
                expected: SHARD_VERSION,
            });
        }
        let rows = r.u32("rows")? as usize;
        let d_in = r.u32("d_in")? as usize;
        let d_out = r.u32("d_out")? as usize;
        let provenance: [u8; 32] = r.take(32, "digest")?.try_into().expect("32 bytes");
        let n_in = rows
            .checked_mul(d_in)
            .ok_or_else(|| Error::parse(12, "row count overflows"))?;
        let n_out = rows
            .checked_mul(d_out)
            .ok_or_else(|| Error::parse(12, "row count overflows"))?;
        let inputs = r.f32s(n_in, "inputs")?;
        let targets = r.f32s(n_out, "targets")?;
        if r.offset() != bytes.len() {
            return Err(Error::parse(
                r.offset() as u64,
                "trailing bytes after targets",
            ));
        }
        FeatureShard::new(d_in, d_out, inputs, targets, provenance)
            .map_err(|e| Error::parse(52, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FeatureShard::from_bytes(&std::fs::read(path)?)
    }
}

fn widen(v: &[f32], d: usize) -> Vec<Vec<f64>> {
    v.chunks_exact(d)
        .map(|r| r.iter().map(|x| f64::from(*x)).collect())
        .collect()
}

pub fn save_shard(path: impl AsRef<Path>, s: &FeatureShard) -> Result<()> {
    s.save(path)
}

pub fn load_shard(path: impl AsRef<Path>) -> Result<FeatureShard> {
    FeatureShard::load(path)
}

pub fn stats_bytes(first: &[f64], second: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 16 * first.len());
    out.extend_from_slice(STATS_MAGIC);
    out.extend_from_slice(&STATS_VERSION.to_le_bytes());
    out.extend_from_slice(&(first.len() as u32).to_le_bytes());
    for v in first.iter().chain(second) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_stats(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "magic")? != STATS_MAGIC {
        return Err(Error::parse(0, "bad magic (expected V2VS)"));
    }
    let version = r.u32("version")?;
    if version != STATS_VERSION {
        return Err(Error::Version {
            what: "stats",
            found: version,
            expected: STATS_VERSION,
        });
    }
    let dim = r.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::parse(8, "zero dimension"));
    }
    let first = r.f64s(dim, "first vector")?;
    let second = r.f64s(dim, "second vector")?;
    if r.offset() != bytes.len() {
        return Err(Error::parse(r.offset() as u64, "trailing bytes"));
    }
    Ok((first, second))
}

pub fn save_norm_stats(path: impl AsRef<Path>, s: &NormStats) -> Result<()> {
    crate::io::write_atomic(path, &stats_bytes(s.mean(), s.std()))
}

pub fn load_norm_stats(path: impl AsRef<Path>) -> Result<NormStats> {
    let (mean, std) = parse_stats(&std::fs::read(path)?)?;
    NormStats::new(Vector::new(mean)?, Vector::new(std)?)
}

pub fn save_gv_stats(path: impl AsRef<Path>, g: &GvStats) -> Result<()> {
    crate::io::write_atomic(path, &stats_bytes(g.reference_std(), g.produced_std()))
}

pub fn load_gv_stats(path: impl AsRef<Path>) -> Result<GvStats> {
    let (reference, produced) = parse_stats(&std::fs::read(path)?)?;
    GvStats::new(Vector::new(reference)?, Vector::new(produced)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shard() -> FeatureShard {
        FeatureShard::new(2, 1, vec![1.0, 2.0, 3.0, 4.0], vec![0.5, -0.5], [7; 32]).unwrap()
    }

    #[test]
    fn layout() {
        let b = shard().to_bytes();
        assert_eq!(&b[..4], b"V2VF");
        assert_eq!(b.len(), 52 + 6 * 4);
        assert_eq!(f32::from_le_bytes(b[52..56].try_into().unwrap()), 1.0);
        assert_eq!(FeatureShard::from_bytes(&b).unwrap(), shard());
    }

    #[test]
    fn damaged() {
        let b = shard().to_bytes();
        assert!(matches!(
            FeatureShard::from_bytes(&b[..b.len() - 1]),
            Err(Error::Parse { .. })
        ));
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(
            FeatureShard::from_bytes(&v),
            Err(Error::Version { found: 2, .. })
        ));
        assert!(FeatureShard::new(2, 1, vec![1.0; 4], vec![0.0; 3], [0; 32]).is_err());
        assert!(FeatureShard::new(2, 1, vec![f32::NAN; 2], vec![0.0], [0; 32]).is_err());
    }

    #[test]
    fn layout_check() {
        let s = FeatureShard::new(6, 2, vec![0.0; 6], vec![0.0; 2], [0; 32]).unwrap();
        assert!(s.check_layout(3, 2, false).is_ok());
        assert!(s.check_layout(2, 2, true).is_ok());
        assert!(s.check_layout(3, 2, true).is_err());
    }

    #[test]
    fn stats_round_trip() {
        let b = stats_bytes(&[1.0, 2.0], &[0.5, 0.25]);
        assert_eq!(b.len(), 12 + 32);
        assert_eq!(parse_stats(&b).unwrap(), (vec![1.0, 2.0], vec![0.5, 0.25]));
        assert!(parse_stats(&b[..20]).is_err());
    }
}
