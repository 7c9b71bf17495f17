use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{CorpusManifest, ManifestEntry};
use super::shard::FeatureShard;
use super::synth::{make_noise, mix_at_snr, synth_clean};
use super::wav::read_wav;
use crate::digest::sha256_bytes;
use crate::dsp::{
    analyze, fit_norm, lps, make_context, nat_estimate, per_bin_std, GvStats, LpsSequence,
    NormStats, Spectrogram, StftConfig, Waveform, DEFAULT_CONTEXT_WIDTH, DEFAULT_NAT_FRAMES,
    LPS_FLOOR,
};
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Where clean utterances come from.
#[derive(Debug, Clone, PartialEq)]
pub enum UtteranceSource {
    /// Generated from the manifest seeds, durations uniform in `[min_secs, max_secs]`.
    Synthetic { min_secs: f64, max_secs: f64 },
    /// `<root>/<split>/clean/<id>.wav`, with `<root>/<split>/noisy/<id>.wav`
    /// used when present and a fresh mix otherwise.
    Directory(PathBuf),
}

impl UtteranceSource {
    pub fn synthetic() -> Self {
        UtteranceSource::Synthetic {
            min_secs: 1.0,
            max_secs: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// One set of input statistics fitted on the training corpus.
    #[default]
    Global,
    /// Inputs normalized with each utterance's own noisy statistics. Targets
    /// always use the training statistics.
    PerUtterance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOptions {
    pub stft: StftConfig,
    pub context: usize,
    pub nat: bool,
    pub nat_frames: usize,
    pub norm: NormMode,
}

impl FeatureOptions {
    pub fn new(stft: StftConfig) -> Self {
        FeatureOptions {
            stft,
            context: DEFAULT_CONTEXT_WIDTH,
            nat: false,
            nat_frames: DEFAULT_NAT_FRAMES,
            norm: NormMode::Global,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.context * self.stft.bins() + if self.nat { self.stft.bins() } else { 0 }
    }

    fn describe(&self) -> String {
        format!(
            "sr={} fft={} hop={} context={} nat={} nat_frames={} norm={:?}",
            self.stft.sample_rate,
            self.stft.fft_size,
            self.stft.hop,
            self.context,
            self.nat,
            self.nat_frames,
            self.norm
        )
    }
}

/// A clean utterance and its noisy version.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
}

pub fn utterance_paths(root: &Path, split: &str, id: &str) -> (PathBuf, PathBuf) {
    let base = root.join(split);
    (
        base.join("clean").join(format!("{id}.wav")),
        base.join("noisy").join(format!("{id}.wav")),
    )
}

/// Synthesizes or loads one utterance and mixes it as the entry specifies.
pub fn load_utterance(
    entry: &ManifestEntry,
    split: &str,
    source: &UtteranceSource,
    sr: u32,
) -> Result<Utterance> {
    let inner = || -> Result<Utterance> {
        let mix = &entry.mix;
        let (clean, noisy_file) = match source {
            UtteranceSource::Synthetic { min_secs, max_secs } => (
                synth_clean(mix.duration(*min_secs, *max_secs), sr, mix.clean_seed())?,
                None,
            ),
            UtteranceSource::Directory(root) => {
                let (clean_path, noisy_path) = utterance_paths(root, split, &entry.id);
                let clean = read_wav(&clean_path)?;
                let noisy = if noisy_path.exists() {
                    Some(read_wav(&noisy_path)?)
                } else {
                    None
                };
                (clean, noisy)
            }
        };
        if clean.sample_rate() != sr {
            return Err(Error::contract(format!(
                "clean audio is {} Hz, the STFT profile needs {sr} Hz",
                clean.sample_rate()
            )));
        }
        let noisy = match noisy_file {
            Some(n) if n.len() == clean.len() && n.sample_rate() == sr => n,
            Some(_) => return Err(Error::contract("noisy file does not match its clean file")),
            None => {
                let noise = make_noise(&mix.noise_kind, clean.len(), sr, mix.noise_seed())?;
                let peak = noise_peak(&noise);
                let noise = Waveform::new(noise.iter().map(|v| v / peak).collect(), sr)?;
                mix_at_snr(&clean, &noise, mix.snr_db)?
            }
        };
        Ok(Utterance {
            id: entry.id.clone(),
            clean,
            noisy,
        })
    };
    inner().map_err(|e| Error::Utterance {
        id: entry.id.clone(),
        source: Box::new(e),
    })
}

fn noise_peak(x: &[f64]) -> f64 {
    x.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()))
}

/// Spectra and raw LPS of one utterance.
#[derive(Debug, Clone)]
pub struct UtteranceFeatures {
    pub noisy_spec: Spectrogram,
    pub noisy_lps: LpsSequence,
    pub clean_lps: LpsSequence,
}

pub fn utterance_features(u: &Utterance, cfg: &StftConfig) -> Result<UtteranceFeatures> {
    let noisy_spec = analyze(&u.noisy, cfg)?;
    let clean_spec = analyze(&u.clean, cfg)?;
    Ok(UtteranceFeatures {
        noisy_lps: lps(&noisy_spec, LPS_FLOOR)?,
        clean_lps: lps(&clean_spec, LPS_FLOOR)?,
        noisy_spec,
    })
}

/// Network inputs for every frame of a raw noisy LPS sequence: normalized,
/// context-stacked, and with the NAT vector (taken from the normalized
/// sequence) appended when enabled.
pub fn input_rows(
    noisy_lps: &LpsSequence,
    stats: &NormStats,
    opts: &FeatureOptions,
) -> Result<Vec<Vec<f64>>> {
    let stats = match opts.norm {
        NormMode::Global => stats.clone(),
        NormMode::PerUtterance => fit_norm(std::slice::from_ref(noisy_lps))?,
    };
    let normalized = stats.apply(noisy_lps)?;
    let nat = if opts.nat {
        Some(nat_estimate(
            &normalized,
            opts.nat_frames.min(normalized.frames()),
        )?)
    } else {
        None
    };
    Ok(make_context(&normalized, opts.context)?
        .into_iter()
        .map(|v| {
            let mut row = v.into_inner();
            if let Some(n) = &nat {
                row.extend_from_slice(n);
            }
            row
        })
        .collect())
}

/// Statistics carried from a training corpus to its test corpus and to
/// enhancement.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedStats {
    pub input: NormStats,
    pub target: NormStats,
    pub gv: GvStats,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub shard: FeatureShard,
    pub stats: FittedStats,
    /// Frame count of each utterance, in manifest order.
    pub frames_per_utterance: Vec<usize>,
}

/// Builds a feature shard from a manifest.
///
/// Without `fitted`, input statistics are fitted on the noisy LPS and target
/// statistics on the clean LPS of this corpus, and the variance-equalization
/// reference is the per-bin std of the clean LPS (the produced std starts equal
/// to it and is replaced after training). With `fitted`, those statistics are
/// reused unchanged, as for a test corpus.
pub fn build_dataset(
    manifest: &CorpusManifest,
    source: &UtteranceSource,
    opts: &FeatureOptions,
    fitted: Option<&FittedStats>,
) -> Result<Dataset> {
    if manifest.is_empty() {
        return Err(Error::contract("manifest is empty"));
    }
    if opts.context % 2 == 0 {
        return Err(Error::contract(format!(
            "context width must be odd, got {}",
            opts.context
        )));
    }
    if opts.nat && opts.nat_frames == 0 {
        return Err(Error::contract("NAT needs at least one lead frame"));
    }
    let split = manifest.split.as_str();
    let features: Vec<UtteranceFeatures> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let u = load_utterance(e, split, source, opts.stft.sample_rate)?;
            utterance_features(&u, &opts.stft).map_err(|err| Error::Utterance {
                id: e.id.clone(),
                source: Box::new(err),
            })
        })
        .collect::<Result<_>>()?;

    let stats = match fitted {
        Some(s) => s.clone(),
        None => {
            let noisy: Vec<LpsSequence> = features.iter().map(|f| f.noisy_lps.clone()).collect();
            let clean: Vec<LpsSequence> = features.iter().map(|f| f.clean_lps.clone()).collect();
            let reference = Vector::new(per_bin_std(&clean)?)?;
            FittedStats {
                input: fit_norm(&noisy)?,
                target: fit_norm(&clean)?,
                gv: GvStats::new(reference.clone(), reference)?,
            }
        }
    };

    let bins = opts.stft.bins();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut frames_per_utterance = Vec::with_capacity(features.len());
    for f in &features {
        for row in input_rows(&f.noisy_lps, &stats.input, opts)? {
            inputs.extend(row.iter().map(|v| *v as f32));
        }
        let t = stats.target.apply(&f.clean_lps)?;
        targets.extend(t.as_slice().iter().map(|v| *v as f32));
        frames_per_utterance.push(f.noisy_lps.frames());
    }
    let mut provenance_text = manifest.to_text();
    provenance_text.push_str(&opts.describe());
    provenance_text.push_str(&format!("{source:?}"));
    let shard = FeatureShard::new(
        opts.input_dim(),
        bins,
        inputs,
        targets,
        sha256_bytes(provenance_text.as_bytes()),
    )?;
    Ok(Dataset {
        shard,
        stats,
        frames_per_utterance,
    })
}
