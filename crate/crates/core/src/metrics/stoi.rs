//! Short-time objective intelligibility.
//!
//! Signals are resampled to 10 kHz, frames whose clean energy is more than
//! 40 dB below the loudest frame are dropped from both signals, and 15
//! one-third-octave band envelopes (from 150 Hz) are compared over 30-frame
//! (384 ms) segments with clipped, normalized correlation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Value returned when fewer than 30 frames survive silence removal.
pub const STOI_TOO_SHORT: f64 = 1e-5;

pub fn stoi(clean: &Waveform, processed: &Waveform, sr: u32) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::contract(format!(
            "stoi needs equal lengths, got {} and {}",
            clean.len(),
            processed.len()
        )));
    }
    if clean.sample_rate() != sr || processed.sample_rate() != sr {
        return Err(Error::contract(
            "stoi: waveform rates differ from the stated rate",
        ));
    }
    if sr != 8000 && sr != 16000 {
        return Err(Error::Unsupported(format!(
            "stoi at {sr} Hz (8000 or 16000 only)"
        )));
    }
    let x = resample(clean.samples(), sr, FS);
    let y = resample(processed.samples(), sr, FS);
    let (x, y) = remove_silent_frames(&x, &y);
    let xs = band_envelopes(&x);
    let ys = band_envelopes(&y);
    let frames = xs.first().map_or(0, Vec::len);
    if frames < SEGMENT {
        log::warn!("stoi: only {frames} frames after silence removal; returning {STOI_TOO_SHORT}");
        return Ok(STOI_TOO_SHORT);
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in SEGMENT..=frames {
        for b in 0..BANDS {
            let xseg = &xs[b][m - SEGMENT..m];
            let yseg = &ys[b][m - SEGMENT..m];
            let gain = norm(xseg) / (norm(yseg) + EPS);
            let yp: Vec<f64> = yseg
                .iter()
                .zip(xseg)
                .map(|(yv, xv)| (yv * gain).min(xv * (1.0 + clip)))
                .collect();
            total += correlation(xseg, &yp);
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let da: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let db: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let (na, nb) = (norm(&da) + EPS, norm(&db) + EPS);
    da.iter().zip(&db).map(|(p, q)| (p / na) * (q / nb)).sum()
}

/// `hanning(FRAME + 2)[1..FRAME + 1]`, the zero-free symmetric Hann window.
fn hann_inner() -> Vec<f64> {
    let m = (FRAME + 2) as f64;
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1.0)).cos())
        .collect()
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann_inner();
    let starts: Vec<usize> = if x.len() > FRAME {
        (0..x.len() - FRAME).step_by(HOP).collect()
    } else {
        Vec::new()
    };
    if starts.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let energy = |s: usize| -> f64 {
        let e: f64 = x[s..s + FRAME]
            .iter()
            .zip(&w)
            .map(|(v, c)| (v * c) * (v * c))
            .sum();
        20.0 * (e.sqrt() + EPS).log10()
    };
    let energies: Vec<f64> = starts.iter().map(|s| energy(*s)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, e)| **e > max - DYN_RANGE_DB)
        .map(|(s, _)| *s)
        .collect();
    let rebuild = |sig: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; (kept.len() - 1) * HOP + FRAME];
        for (k, s) in kept.iter().enumerate() {
            for i in 0..FRAME {
                out[k * HOP + i] += sig[s + i] * w[i];
            }
        }
        out
    };
    (rebuild(x), rebuild(y))
}

/// One-third-octave band magnitudes, `BANDS` rows of per-frame values.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = hann_inner();
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bins = NFFT / 2 + 1;
    let edges = band_edges();
    let mut out = vec![Vec::new(); BANDS];
    if x.len() <= FRAME {
        return out;
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for s in (0..x.len() - FRAME).step_by(HOP) {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i].re = x[s + i] * w[i];
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..bins].iter().map(|z| z.norm_sqr()).collect();
        for (b, (lo, hi)) in edges.iter().enumerate() {
            out[b].push(power[*lo..*hi].iter().sum::<f64>().sqrt());
        }
    }
    out
}

/// `[lo, hi)` FFT-bin ranges of the 15 bands: nearest bins to
/// `150 · 2^((2k ∓ 1)/6)` Hz.
fn band_edges() -> Vec<(usize, usize)> {
    let df = f64::from(FS) / NFFT as f64;
    let nearest = |f: f64| -> usize { (f / df).round() as usize };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Polyphase resampling by `to/from` with a Kaiser-windowed sinc
/// (β = 5, half-length `10 · max(up, down)` taps) that compensates the
/// filter delay.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from, to);
    let (up, down) = ((to / g) as usize, (from / g) as usize);
    let half = 10 * up.max(down);
    let cutoff = 1.0 / up.max(down) as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                cutoff
            } else {
                (PI * cutoff * t).sin() / (PI * t)
            };
            let r = t / half as f64;
            sinc * bessel_i0(5.0 * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(5.0) * up as f64
        })
        .collect();
    let out_len = (x.len() * up).div_ceil(down);
    (0..out_len)
        .map(|n| {
            // Output n sits at upsampled index n·down; taps centred there.
            let centre = (n * down + half) as isize;
            let mut acc = 0.0;
            let first = (centre - 2 * half as isize).max(0);
            let mut i = first + (up as isize - first.rem_euclid(up as isize)) % up as isize;
            while i <= centre {
                let src = (i / up as isize) as usize;
                if src >= x.len() {
                    break;
                }
                acc += taps[(centre - i) as usize] * x[src];
                i += up as isize;
            }
            acc
        })
        .collect()
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
