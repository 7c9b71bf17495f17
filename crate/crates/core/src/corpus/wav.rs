//! 16-bit PCM mono RIFF/WAVE.

use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::network::ByteReader;

pub const SUPPORTED_RATES: [u32; 3] = [8000, 16000, 48000];

const PCM: u16 = 1;
const IEEE_FLOAT: u16 = 3;
const EXTENSIBLE: u16 = 0xFFFE;

/// Encodes a waveform as 16-bit PCM: `round(x · 32768)` saturated to the
/// `i16` range.
pub fn wav_bytes(w: &Waveform) -> Result<Vec<u8>> {
    if !SUPPORTED_RATES.contains(&w.sample_rate()) {
        return Err(Error::Unsupported(format!(
            "sample rate {} Hz",
            w.sample_rate()
        )));
    }
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + w.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in w.samples() {
        out.extend_from_slice(&quantize(*s).to_le_bytes());
    }
    Ok(out)
}

fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Decodes 16-bit PCM mono; samples are scaled by `1/32768`.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::parse(0, "missing RIFF tag"));
    }
    r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::parse(8, "missing WAVE tag"));
    }
    let mut rate = None;
    loop {
        let at = r.offset();
        if at == bytes.len() {
            return Err(Error::parse(at as u64, "no data chunk"));
        }
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::parse(
                        at as u64 + 4,
                        format!("fmt chunk of {size} bytes is too short"),
                    ));
                }
                let body = r.take(size, "fmt chunk")?;
                let le16 = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
                let format = le16(0);
                let channels = le16(2);
                let sr = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
                let bits = le16(14);
                match format {
                    PCM => {}
                    IEEE_FLOAT => {
                        return Err(Error::Unsupported(format!("{bits}-bit float samples")))
                    }
                    EXTENSIBLE => return Err(Error::Unsupported("WAVE_FORMAT_EXTENSIBLE".into())),
                    other => return Err(Error::Unsupported(format!("format tag {other}"))),
                }
                if channels != 1 {
                    return Err(Error::Unsupported(format!(
                        "{channels} channels (mono only)"
                    )));
                }
                if bits != 16 {
                    return Err(Error::Unsupported(format!("{bits}-bit PCM (16-bit only)")));
                }
                if !SUPPORTED_RATES.contains(&sr) {
                    return Err(Error::Unsupported(format!("sample rate {sr} Hz")));
                }
                rate = Some(sr);
            }
            b"data" => {
                let sr =
                    rate.ok_or_else(|| Error::parse(at as u64, "data chunk before fmt chunk"))?;
                if size == 0 {
                    return Err(Error::parse(at as u64 + 4, "empty data chunk"));
                }
                if size % 2 != 0 {
                    return Err(Error::parse(at as u64 + 4, format!("odd data size {size}")));
                }
                let body = r.take(size, "sample data")?;
                let samples = body
                    .chunks_exact(2)
                    .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                    .collect();
                return Waveform::new(samples, sr);
            }
            _ => {
                r.take(size + size % 2, "chunk body")?;
            }
        }
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    parse_wav(&std::fs::read(path)?)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    crate::io::write_atomic(path, &wav_bytes(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let w = Waveform::new(vec![0.0, 0.5, -1.0], 8000).unwrap();
        let b = wav_bytes(&w).unwrap();
        assert_eq!(b.len(), 44 + 6);
        assert_eq!(&b[36..40], b"data");
        assert_eq!(i16::from_le_bytes([b[46], b[47]]), 16384);
        assert_eq!(i16::from_le_bytes([b[48], b[49]]), -32768);
        let back = parse_wav(&b).unwrap();
        assert_eq!(back.samples()[2], -1.0);
        assert!((back.samples()[1] - 0.5).abs() <= 1.0 / 32768.0);
    }

    #[test]
    fn rejects_bad_headers() {
        let w = Waveform::new(vec![0.25; 10], 16000).unwrap();
        let good = wav_bytes(&w).unwrap();
        let mut float = good.clone();
        float[20] = 3;
        float[34] = 32;
        assert!(matches!(parse_wav(&float), Err(Error::Unsupported(_))));
        let mut stereo = good.clone();
        stereo[22] = 2;
        assert!(matches!(parse_wav(&stereo), Err(Error::Unsupported(_))));
        let mut empty = good[..44].to_vec();
        empty[40..44].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(parse_wav(&empty), Err(Error::Parse { .. })));
        assert!(matches!(parse_wav(&good[..30]), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_wav(b"RIFX"),
            Err(Error::Parse { offset: 0, .. })
        ));
        let odd = Waveform::new(vec![0.0; 4], 44100).unwrap();
        assert!(matches!(wav_bytes(&odd), Err(Error::Unsupported(_))));
    }
}
