use rustfft::num_complex::Complex64;

use super::{Spectrogram, StftConfig};
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::Vector;

pub const LPS_FLOOR: f64 = 1e-10;
pub const STD_FLOOR: f64 = 1e-6;
pub const DEFAULT_CONTEXT_WIDTH: usize = 3;
pub const DEFAULT_NAT_FRAMES: usize = 6;

/// `T × bins` natural-log power values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LpsSequence {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
    config: StftConfig,
}

impl LpsSequence {
    pub fn new(frames: usize, data: Vec<f64>, config: StftConfig) -> Result<Self> {
        let bins = config.bins();
        if data.len() != frames * bins {
            return Err(Error::contract(format!(
                "LPS data has {} values, expected {frames} x {bins}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("LPS values must be finite"));
        }
        Ok(LpsSequence {
            frames,
            bins,
            data,
            config,
        })
    }

    pub fn from_frames<F: AsRef<[f64]>>(frames: &[F], config: StftConfig) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * config.bins());
        for f in frames {
            ensure_dim(config.bins(), f.as_ref().len(), "LPS frame")?;
            data.extend_from_slice(f.as_ref());
        }
        LpsSequence::new(frames.len(), data, config)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn iter_frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.bins)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn map_bins(&self, f: impl Fn(usize, f64) -> f64) -> LpsSequence {
        let bins = self.bins;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| f(i % bins, *v))
            .collect();
        LpsSequence {
            data,
            ..self.clone()
        }
    }

    /// Per-bin mean over frames.
    pub fn bin_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.bins];
        for f in self.iter_frames() {
            m.iter_mut().zip(f).for_each(|(a, v)| *a += v);
        }
        let t = self.frames.max(1) as f64;
        m.iter_mut().for_each(|a| *a /= t);
        m
    }
}

/// Per cell `ln(max(|z|², floor))`.
pub fn lps(spec: &Spectrogram, floor: f64) -> Result<LpsSequence> {
    if !(floor > 0.0) {
        return Err(Error::contract("power floor must be positive"));
    }
    let data = spec
        .as_slice()
        .iter()
        .map(|z| z.norm_sqr().max(floor).ln())
        .collect();
    LpsSequence::new(spec.frames(), data, *spec.config())
}

/// Magnitudes `sqrt(exp(l))` with the phases of `phase_source`.
pub fn lps_to_spectrogram(l: &LpsSequence, phase_source: &Spectrogram) -> Result<Spectrogram> {
    if l.frames != phase_source.frames() || l.config != *phase_source.config() {
        return Err(Error::contract(format!(
            "LPS shape {} x {} does not match spectrogram {} x {}",
            l.frames,
            l.bins,
            phase_source.frames(),
            phase_source.bins()
        )));
    }
    let data = l
        .data
        .iter()
        .zip(phase_source.as_slice())
        .map(|(v, z)| Complex64::from_polar((0.5 * v).exp(), z.arg()))
        .collect();
    Spectrogram::new(l.frames, data, l.config)
}

/// Per-bin mean and standard deviation used to normalize features.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    mean: Vector,
    std: Vector,
}

impl NormStats {
    pub fn new(mean: Vector, std: Vector) -> Result<Self> {
        ensure_dim(mean.dim(), std.dim(), "std")?;
        if std.iter().any(|s| *s < STD_FLOOR) {
            return Err(Error::contract(format!(
                "std entries must be >= {STD_FLOOR}"
            )));
        }
        Ok(NormStats { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn apply_frame(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(self.mean.iter()).zip(self.std.iter()) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert_frame(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(self.mean.iter()).zip(self.std.iter()) {
            *v = *v * s + m;
        }
    }

    /// `(x − mean) / std` per bin.
    pub fn apply(&self, l: &LpsSequence) -> Result<LpsSequence> {
        ensure_dim(self.dim(), l.bins, "LPS bins")?;
        Ok(l.map_bins(|b, v| (v - self.mean[b]) / self.std[b]))
    }

    /// `x · std + mean` per bin.
    pub fn invert(&self, l: &LpsSequence) -> Result<LpsSequence> {
        ensure_dim(self.dim(), l.bins, "LPS bins")?;
        Ok(l.map_bins(|b, v| v * self.std[b] + self.mean[b]))
    }
}

/// Per-bin mean and population std over every frame of `train`, std floored
/// at [`STD_FLOOR`].
pub fn fit_norm(train: &[LpsSequence]) -> Result<NormStats> {
    let (mean, std) = moments(train)?;
    NormStats::new(Vector::new(mean)?, Vector::new(std)?)
}

/// Per-bin population std over all frames of `seqs`, floored at [`STD_FLOOR`].
pub fn per_bin_std(seqs: &[LpsSequence]) -> Result<Vec<f64>> {
    Ok(moments(seqs)?.1)
}

fn moments(seqs: &[LpsSequence]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = seqs
        .iter()
        .find(|s| s.frames > 0)
        .ok_or_else(|| Error::contract("statistics need at least one frame"))?;
    let bins = first.bins;
    let mut count = 0usize;
    let mut mean = vec![0.0; bins];
    let mut m2 = vec![0.0; bins];
    for s in seqs {
        ensure_dim(bins, s.bins, "LPS bins")?;
        for f in s.iter_frames() {
            count += 1;
            let c = count as f64;
            for b in 0..bins {
                let d = f[b] - mean[b];
                mean[b] += d / c;
                m2[b] += d * (f[b] - mean[b]);
            }
        }
    }
    let std = m2
        .iter()
        .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok((mean, std))
}

/// For each frame, the concatenation of its `width` neighbours centred on it,
/// replicating the first and last frame at the edges.
pub fn make_context(l: &LpsSequence, width: usize) -> Result<Vec<Vector>> {
    if width % 2 == 0 {
        return Err(Error::contract(format!(
            "context width must be odd, got {width}"
        )));
    }
    let half = (width / 2) as isize;
    let last = l.frames as isize - 1;
    (0..l.frames as isize)
        .map(|t| {
            let mut v = Vec::with_capacity(width * l.bins);
            for o in -half..=half {
                v.extend_from_slice(l.frame((t + o).clamp(0, last) as usize));
            }
            Vector::new(v)
        })
        .collect()
}

/// Per-bin mean of the first `lead_frames` frames.
pub fn nat_estimate(noisy: &LpsSequence, lead_frames: usize) -> Result<Vector> {
    if lead_frames == 0 || lead_frames > noisy.frames {
        return Err(Error::contract(format!(
            "lead_frames must be in 1..={}, got {lead_frames}",
            noisy.frames
        )));
    }
    let mut m = vec![0.0; noisy.bins];
    for f in noisy.iter_frames().take(lead_frames) {
        m.iter_mut().zip(f).for_each(|(a, v)| *a += v);
    }
    m.iter_mut().for_each(|a| *a /= lead_frames as f64);
    Vector::new(m)
}

/// Reference and produced per-bin standard deviations for variance
/// equalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GvStats {
    reference_std: Vector,
    produced_std: Vector,
}

impl GvStats {
    pub fn new(reference_std: Vector, produced_std: Vector) -> Result<Self> {
        ensure_dim(reference_std.dim(), produced_std.dim(), "produced_std")?;
        if reference_std
            .iter()
            .chain(produced_std.iter())
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::contract("GV statistics must be positive"));
        }
        Ok(GvStats {
            reference_std,
            produced_std,
        })
    }

    pub fn reference_std(&self) -> &[f64] {
        &self.reference_std
    }

    pub fn produced_std(&self) -> &[f64] {
        &self.produced_std
    }

    pub fn dim(&self) -> usize {
        self.reference_std.dim()
    }

    /// Same reference, new produced statistics.
    pub fn with_produced(&self, produced_std: Vector) -> Result<Self> {
        GvStats::new(self.reference_std.clone(), produced_std)
    }
}

/// Per bin `m`: `(x − mean_m) · reference_std_m / produced_std_m + mean_m`,
/// where `mean_m` is the bin mean of `enhanced` itself.
pub fn gv_equalize(enhanced: &LpsSequence, g: &GvStats) -> Result<LpsSequence> {
    ensure_dim(g.dim(), enhanced.bins, "LPS bins")?;
    let means = enhanced.bin_means();
    let ratio: Vec<f64> = g
        .reference_std
        .iter()
        .zip(g.produced_std.iter())
        .map(|(r, p)| r / p)
        .collect();
    Ok(enhanced.map_bins(|b, v| {
        if ratio[b] == 1.0 {
            v
        } else {
            (v - means[b]) * ratio[b] + means[b]
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg4() -> StftConfig {
        // 8-point frames, 5 bins.
        StftConfig::new(8000, 8).unwrap()
    }

    fn seq(frames: &[[f64; 5]]) -> LpsSequence {
        LpsSequence::from_frames(frames, cfg4()).unwrap()
    }

    #[test]
    fn lps_floor_and_unit() {
        let cfg = cfg4();
        let ones = Spectrogram::new(1, vec![Complex64::new(0.0, 1.0); 5], cfg).unwrap();
        assert!(lps(&ones, LPS_FLOOR)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| *v == 0.0));
        let zeros = Spectrogram::new(1, vec![Complex64::new(0.0, 0.0); 5], cfg).unwrap();
        assert!(lps(&zeros, LPS_FLOOR)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| *v == LPS_FLOOR.ln()));
        let unit =
            lps_to_spectrogram(&LpsSequence::new(1, vec![0.0; 5], cfg).unwrap(), &ones).unwrap();
        assert!(unit
            .as_slice()
            .iter()
            .all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!(lps(&ones, 0.0).is_err());
    }

    #[test]
    fn context_hand_enumeration() {
        let frames: Vec<[f64; 5]> = (0..4).map(|i| [i as f64; 5]).collect();
        let l = seq(&frames);
        let c = make_context(&l, 3).unwrap();
        let firsts: Vec<[f64; 3]> = c.iter().map(|v| [v[0], v[5], v[10]]).collect();
        assert_eq!(
            firsts,
            vec![[0., 0., 1.], [0., 1., 2.], [1., 2., 3.], [2., 3., 3.]]
        );
        assert_eq!(make_context(&l, 1).unwrap()[2].as_slice(), l.frame(2));
        assert!(make_context(&l, 2).is_err());
        let single = make_context(&seq(&[[7.0; 5]]), 3).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].as_slice(), &[7.0; 15]);
    }

    #[test]
    fn nat_two_frame_toy() {
        let l = seq(&[[0.0, 2.0, 0.0, 2.0, 0.0], [2.0, 0.0, 2.0, 0.0, 2.0]]);
        assert_eq!(nat_estimate(&l, 2).unwrap().as_slice(), &[1.0; 5]);
        assert!(nat_estimate(&l, 0).is_err());
        assert!(nat_estimate(&l, 3).is_err());
    }

    #[test]
    fn degenerate_norm() {
        let l = seq(&[[3.0; 5], [3.0; 5], [3.0; 5]]);
        let s = fit_norm(&[l.clone()]).unwrap();
        assert!(s.std().iter().all(|v| *v == STD_FLOOR));
        assert!(s
            .apply(&l)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| v.abs() < 1e-9));
        assert!(fit_norm(&[]).is_err());
    }

    #[test]
    fn gv_rules() {
        let l = seq(&[[1.0, 2.0, 3.0, 4.0, 5.0], [3.0, 2.0, 1.0, 0.0, -1.0]]);
        let same = GvStats::new(
            Vector::new(vec![2.0; 5]).unwrap(),
            Vector::new(vec![2.0; 5]).unwrap(),
        )
        .unwrap();
        assert_eq!(gv_equalize(&l, &same).unwrap(), l);
        let c = seq(&[[1.0; 5], [1.0; 5]]);
        let double = GvStats::new(
            Vector::new(vec![2.0; 5]).unwrap(),
            Vector::new(vec![1.0; 5]).unwrap(),
        )
        .unwrap();
        assert_eq!(gv_equalize(&c, &double).unwrap(), c);
        assert!(GvStats::new(
            Vector::new(vec![0.0; 5]).unwrap(),
            Vector::new(vec![1.0; 5]).unwrap()
        )
        .is_err());
    }
}
