//! Short-time spectral analysis and the log-power feature chain.
//!
//! Frames use a periodic Hann window at 50 % overlap. The forward FFT is
//! unnormalized and the inverse is scaled by `1/fft_size`, so a frame analysed
//! and inverted comes back as the windowed frame, and overlap-adding windowed
//! frames at hop `fft_size/2` returns the signal (the shifted windows sum to 1).

mod features;

pub use features::{
    fit_norm, gv_equalize, lps, lps_to_spectrogram, make_context, nat_estimate, per_bin_std,
    GvStats, LpsSequence, NormStats, DEFAULT_CONTEXT_WIDTH, DEFAULT_NAT_FRAMES, LPS_FLOOR,
    STD_FLOOR,
};

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(sample_rate: u32, fft_size: usize) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::contract("sample rate must be positive"));
        }
        if fft_size < 4 || !fft_size.is_power_of_two() {
            return Err(Error::contract(format!(
                "fft_size must be a power of two >= 4, got {fft_size}"
            )));
        }
        Ok(StftConfig {
            sample_rate,
            fft_size,
            hop: fft_size / 2,
            window: Window::Hann,
        })
    }

    /// 8 kHz, 256-point frames (129 bins).
    pub fn desk() -> Self {
        StftConfig::new(8000, 256).expect("valid constants")
    }

    /// 16 kHz, 512-point frames (257 bins).
    pub fn full() -> Self {
        StftConfig::new(16000, 512).expect("valid constants")
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Periodic Hann: `0.5 − 0.5 cos(2πn/N)`.
    pub fn window_coefficients(&self) -> Vec<f64> {
        let n = self.fft_size as f64;
        (0..self.fft_size)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sample_rate > 0
            && self.fft_size >= 4
            && self.fft_size.is_power_of_two()
            && self.hop * 2 == self.fft_size;
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "invalid STFT configuration {self:?}"
            )))
        }
    }
}

/// Mono signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("waveform must be nonempty"));
        }
        if sample_rate == 0 {
            return Err(Error::contract("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !(v.abs() <= 1.0)) {
            return Err(Error::contract(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// Like [`Waveform::new`] but clamps out-of-range samples; NaN becomes 0.
    pub fn clipped(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        for v in samples.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        }
        Waveform::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// `T × bins` complex frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    data: Vec<Complex64>,
    config: StftConfig,
}

impl Spectrogram {
    pub fn new(frames: usize, data: Vec<Complex64>, config: StftConfig) -> Result<Self> {
        config.validate()?;
        if data.len() != frames * config.bins() {
            return Err(Error::contract(format!(
                "spectrogram data has {} cells, expected {frames} x {}",
                data.len(),
                config.bins()
            )));
        }
        Ok(Spectrogram {
            frames,
            data,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let b = self.bins();
        &self.data[t * b..(t + 1) * b]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn map_magnitudes(&self, f: impl Fn(f64) -> f64) -> Spectrogram {
        let data = self
            .data
            .iter()
            .map(|z| Complex64::from_polar(f(z.norm()), z.arg()))
            .collect();
        Spectrogram {
            data,
            ..self.clone()
        }
    }

    fn same_shape(&self, other: &Spectrogram) -> Result<()> {
        if self.frames != other.frames || self.config != other.config {
            return Err(Error::contract(format!(
                "spectrogram shapes differ: {} x {} vs {} x {}",
                self.frames,
                self.bins(),
                other.frames,
                other.bins()
            )));
        }
        Ok(())
    }
}

pub fn frame_count(len: usize, cfg: &StftConfig) -> usize {
    if len < cfg.fft_size {
        0
    } else {
        (len - cfg.fft_size) / cfg.hop + 1
    }
}

/// Hann-windowed, hop-strided FFT frames; `T = ⌊(len − fft_size)/hop⌋ + 1`.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let x = w.samples();
    if x.len() < cfg.fft_size {
        return Err(Error::contract(format!(
            "waveform of {} samples is shorter than one frame ({})",
            x.len(),
            cfg.fft_size
        )));
    }
    let n = cfg.fft_size;
    let bins = cfg.bins();
    let frames = frame_count(x.len(), cfg);
    let window = cfg.window_coefficients();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &x[t * cfg.hop..t * cfg.hop + n];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    Spectrogram::new(frames, data, *cfg)
}

/// Inverse transform with magnitudes from `spec` and phases from
/// `phase_source`, overlap-added at the hop.
///
/// The output has `(T − 1)·hop + fft_size` samples and is not clipped, so it is
/// returned as raw samples; wrap with [`Waveform::clipped`] when needed.
pub fn overlap_add(
    spec: &Spectrogram,
    phase_source: &Spectrogram,
    cfg: &StftConfig,
) -> Result<Vec<f64>> {
    spec.same_shape(phase_source)?;
    if spec.config != *cfg {
        return Err(Error::contract(
            "spectrogram was computed with a different STFT configuration",
        ));
    }
    let n = cfg.fft_size;
    let bins = cfg.bins();
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut out = vec![0.0; (spec.frames - 1) * cfg.hop + n];
    let scale = 1.0 / n as f64;
    for t in 0..spec.frames {
        let mag = spec.frame(t);
        let ph = phase_source.frame(t);
        for k in 0..bins {
            buf[k] = Complex64::from_polar(mag[k].norm(), ph[k].arg());
        }
        // Real signals have Hermitian spectra; DC and Nyquist are real.
        buf[0].im = 0.0;
        buf[bins - 1].im = 0.0;
        for k in 1..bins - 1 {
            buf[n - k] = buf[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        for (o, z) in out[t * cfg.hop..t * cfg.hop + n].iter_mut().zip(&buf) {
            *o += z.re * scale;
        }
    }
    Ok(out)
}

/// Pads with `hop` zeros in front and at least `hop` at the end so that
/// every original sample lies where two windows overlap.
///
/// Returns the padded waveform and the offset of the first original sample.
pub fn pad_for_analysis(w: &Waveform, cfg: &StftConfig) -> Result<(Waveform, usize)> {
    cfg.validate()?;
    let hop = cfg.hop;
    let min_len = (hop + w.len() + hop).max(cfg.fft_size);
    let extra = (min_len - cfg.fft_size).div_ceil(hop) * hop;
    let total = cfg.fft_size + extra;
    let mut samples = vec![0.0; total];
    samples[hop..hop + w.len()].copy_from_slice(w.samples());
    Ok((Waveform::new(samples, w.sample_rate())?, hop))
}

/// Padded analysis of a waveform of any length.
pub fn analyze(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    let (padded, _) = pad_for_analysis(w, cfg)?;
    stft(&padded, cfg)
}

/// Inverse of [`analyze`]: overlap-adds and trims back to `len` samples.
pub fn synthesize(
    spec: &Spectrogram,
    phase_source: &Spectrogram,
    cfg: &StftConfig,
    len: usize,
) -> Result<Vec<f64>> {
    let full = overlap_add(spec, phase_source, cfg)?;
    let start = cfg.hop;
    if start + len > full.len() {
        return Err(Error::contract(format!(
            "cannot trim {len} samples from a {}-sample reconstruction",
            full.len()
        )));
    }
    Ok(full[start..start + len].to_vec())
}
