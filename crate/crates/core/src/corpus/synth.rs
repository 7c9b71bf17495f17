use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::wav::read_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::numerics::{mix_seed, SeededRng};

pub const CLEAN_PEAK: f64 = 0.5;
pub const MIN_CLEAN_SECS: f64 = 0.5;
/// Frames quieter than `mean / ACTIVITY_RATIO` are excluded from SNR power.
pub const ACTIVITY_RATIO: f64 = 100.0;
const ACTIVITY_FRAME_SECS: f64 = 0.02;
const BABBLE_TALKERS: u64 = 8;
const LEAD_SILENCE_MAX: f64 = 0.25;
/// Background floor of clean utterances, relative to the peak.
pub const CLEAN_FLOOR_DB: f64 = -60.0;

/// Harmonic stand-in for a clean utterance.
///
/// Voiced segments of 0.2–0.6 s (each with its own fundamental in
/// [100, 300] Hz, 3–6 harmonics with `1/k` amplitudes, a slow pitch glide and
/// 2–6 Hz amplitude modulation) alternate with 0.05–0.2 s pauses; the signal
/// opens with 0.15–0.25 s of silence. Segment edges get 10 ms raised-cosine
/// ramps. A white background floor 60 dB below the peak stands in for the
/// recording noise of real speech. The result is scaled to a peak of exactly 0.5.
pub fn synth_clean(duration_s: f64, sr: u32, seed: u64) -> Result<Waveform> {
    if !(duration_s >= MIN_CLEAN_SECS) {
        return Err(Error::contract(format!(
            "synth_clean needs at least {MIN_CLEAN_SECS} s, got {duration_s}"
        )));
    }
    let fs = f64::from(sr);
    let len = (duration_s * fs).round() as usize;
    let mut rng = SeededRng::new(seed);
    let mut x = vec![0.0; len];
    let ramp = (0.01 * fs) as usize;
    let mut pos = (rng.uniform_range(0.15, LEAD_SILENCE_MAX) * fs) as usize;
    let mut phase = [0.0f64; 6];
    while pos < len {
        let seg = ((rng.uniform_range(0.2, 0.6) * fs) as usize).min(len - pos);
        let f0 = rng.uniform_range(100.0, 300.0);
        let glide = rng.uniform_range(-0.2, 0.2);
        let harmonics = 3 + rng.below(4) as usize;
        let am_rate = rng.uniform_range(2.0, 6.0);
        let am_phase = rng.uniform_range(0.0, 2.0 * PI);
        for i in 0..seg {
            let t = i as f64 / fs;
            let f = f0 * (1.0 + glide * i as f64 / seg as f64);
            let am = 1.0 + 0.5 * (2.0 * PI * am_rate * t + am_phase).sin();
            let edge = i.min(seg - 1 - i);
            let env = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let mut v = 0.0;
            for (k, ph) in phase.iter_mut().enumerate().take(harmonics) {
                let h = (k + 1) as f64;
                *ph = (*ph + 2.0 * PI * h * f / fs) % (2.0 * PI);
                v += ph.sin() / h;
            }
            x[pos + i] = v * am * env;
        }
        pos += seg + (rng.uniform_range(0.05, 0.2) * fs) as usize;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        // Too short for any voiced segment after the leading pause.
        let tone: Vec<f64> = (0..len)
            .map(|i| (2.0 * PI * 200.0 * i as f64 / fs).sin())
            .collect();
        return peak_normalized(tone, sr);
    }
    let mut floor_rng = rng.derive(1);
    let floor = peak * 10f64.powf(CLEAN_FLOOR_DB / 20.0);
    x.iter_mut()
        .for_each(|v| *v += floor * floor_rng.standard_normal());
    peak_normalized(x, sr)
}

fn peak_normalized(mut x: Vec<f64>, sr: u32) -> Result<Waveform> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v *= CLEAN_PEAK / peak);
    Waveform::new(x, sr)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    White,
    /// −3 dB/octave.
    Pink,
    /// Eight synthetic talkers, band-limited to roughly 200–3400 Hz.
    FilteredBabble,
    /// Noise read from a WAV file, tiled to length.
    File(PathBuf),
}

impl NoiseKind {
    pub fn synthetic() -> [NoiseKind; 3] {
        [NoiseKind::White, NoiseKind::Pink, NoiseKind::FilteredBabble]
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::White => f.write_str("white"),
            NoiseKind::Pink => f.write_str("pink"),
            NoiseKind::FilteredBabble => f.write_str("babble"),
            NoiseKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "babble" => Ok(NoiseKind::FilteredBabble),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(NoiseKind::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown noise kind '{s}' (white, pink, babble, file:<path>)"
                ))),
            },
        }
    }
}

/// Noise of exactly `len` samples. Synthetic kinds are deterministic in `seed`;
/// file noise is tiled from the start.
pub fn make_noise(kind: &NoiseKind, len: usize, sr: u32, seed: u64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::contract("noise length must be positive"));
    }
    let mut rng = SeededRng::new(seed);
    let out = match kind {
        NoiseKind::White => (0..len).map(|_| rng.standard_normal()).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's economy pinking filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..len)
                .map(|_| {
                    let w = rng.standard_normal();
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseKind::FilteredBabble => {
            // Talkers skip their leading pause.
            let skip = (LEAD_SILENCE_MAX * f64::from(sr)) as usize;
            let secs = ((len + skip) as f64 / f64::from(sr)).max(MIN_CLEAN_SECS);
            let mut sum = vec![0.0; len];
            for k in 0..BABBLE_TALKERS {
                let talker = synth_clean(secs, sr, mix_seed(seed, k))?;
                sum.iter_mut()
                    .zip(&talker.samples()[skip..])
                    .for_each(|(a, v)| *a += v);
            }
            band_limit(&sum, f64::from(sr), 200.0, 3400.0)
        }
        NoiseKind::File(path) => {
            let w = read_wav(path)?;
            if w.sample_rate() != sr {
                return Err(Error::Unsupported(format!(
                    "noise file {} is {} Hz, expected {sr} Hz",
                    path.display(),
                    w.sample_rate()
                )));
            }
            w.samples().iter().copied().cycle().take(len).collect()
        }
    };
    Ok(out)
}

/// One-pole high-pass at `lo` followed by a one-pole low-pass at `hi`
/// (the low-pass is skipped when `hi` is at or above Nyquist).
fn band_limit(x: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    let a_hp = 1.0 / (1.0 + 2.0 * PI * lo / fs);
    let mut y = Vec::with_capacity(x.len());
    let (mut prev_x, mut prev_y) = (0.0, 0.0);
    for v in x {
        let out = a_hp * (prev_y + v - prev_x);
        prev_x = *v;
        prev_y = out;
        y.push(out);
    }
    if hi < fs / 2.0 {
        let dt = 1.0 / fs;
        let rc = 1.0 / (2.0 * PI * hi);
        let a = dt / (rc + dt);
        let mut s = 0.0;
        for v in y.iter_mut() {
            s += a * (*v - s);
            *v = s;
        }
    }
    y
}

/// Per-sample mask of the active region: 20 ms frames whose energy exceeds
/// the mean frame energy divided by [`ACTIVITY_RATIO`].
pub fn active_mask(clean: &[f64], sr: u32) -> Vec<bool> {
    let frame = ((ACTIVITY_FRAME_SECS * f64::from(sr)) as usize).max(1);
    let energies: Vec<f64> = clean
        .chunks(frame)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    let mut mask = Vec::with_capacity(clean.len());
    for (c, e) in clean.chunks(frame).zip(&energies) {
        mask.extend(std::iter::repeat(*e > mean / ACTIVITY_RATIO).take(c.len()));
    }
    mask
}

/// Mean power of `x` over the samples where `mask` is set.
pub fn masked_power(x: &[f64], mask: &[bool]) -> f64 {
    let (sum, n) = x
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Noise tiled (or truncated) to the clean length and scaled so that
/// `10 log10(P_clean / P_noise) = snr_db` over the clean signal's active region.
pub fn scale_noise_for_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Vec<f64>> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::contract(format!(
            "sample rates differ: clean {} Hz, noise {} Hz",
            clean.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::contract("SNR must be finite"));
    }
    let mask = active_mask(clean.samples(), clean.sample_rate());
    let p_clean = masked_power(clean.samples(), &mask);
    if p_clean == 0.0 {
        return Err(Error::contract("clean signal is silent"));
    }
    let tiled: Vec<f64> = noise
        .samples()
        .iter()
        .copied()
        .cycle()
        .take(clean.len())
        .collect();
    let p_noise = masked_power(&tiled, &mask);
    if p_noise == 0.0 {
        return Err(Error::contract(
            "noise is silent over the clean signal's active region",
        ));
    }
    let gain = (p_clean / p_noise / 10f64.powf(snr_db / 10.0)).sqrt();
    Ok(tiled.into_iter().map(|v| v * gain).collect())
}

/// `clean + scaled noise` (see [`scale_noise_for_snr`]). Samples beyond
/// `[-1, 1]` are clamped.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    let scaled = scale_noise_for_snr(clean, noise, snr_db)?;
    let mixed = clean
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Waveform::clipped(mixed, clean.sample_rate())
}
