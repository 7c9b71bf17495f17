//! Line-oriented corpus manifests.
//!
//! ```text
//! # split=train
//! # profile=desk
//! train_00000	white	0	1234
//! ```
//! Columns are `<id>\t<noise_kind>\t<snr_db>\t<seed>`; `#` lines carry the
//! split and STFT profile, other `#` lines are ignored.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::synth::NoiseKind;
use crate::error::{Error, Result};
use crate::numerics::mix_seed;

pub const TRAIN_SNRS: [f64; 4] = [0.0, 5.0, 10.0, 15.0];
pub const TEST_SNRS: [f64; 4] = [2.5, 7.5, 12.5, 17.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(snr_db: f64, noise_kind: NoiseKind, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::contract("SNR must be finite"));
        }
        Ok(MixSpec {
            snr_db,
            noise_kind,
            seed,
        })
    }

    /// Seed of the clean utterance.
    pub fn clean_seed(&self) -> u64 {
        mix_seed(self.seed, 1)
    }

    /// Seed of the noise signal.
    pub fn noise_seed(&self) -> u64 {
        mix_seed(self.seed, 2)
    }

    /// Duration of the synthetic clean utterance, uniform in
    /// `[min_s, max_s]` and fixed by the seed.
    pub fn duration(&self, min_s: f64, max_s: f64) -> f64 {
        let u = (mix_seed(self.seed, 3) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        min_s + (max_s - min_s) * u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub mix: MixSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub split: Split,
    pub profile: String,
    entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(
        split: Split,
        profile: impl Into<String>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.id.is_empty() || e.id.contains(['\t', '\n', '/', '\\']) {
                return Err(Error::contract(format!("invalid utterance id '{}'", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::contract(format!(
                    "duplicate utterance id '{}'",
                    e.id
                )));
            }
        }
        Ok(CorpusManifest {
            split,
            profile: profile.into(),
            entries,
        })
    }

    /// `n` utterances cycling through every (SNR, noise kind) pair; ids are
    /// `<split>_<index>` and seeds derive from `base_seed` and the split.
    pub fn synthetic(
        split: Split,
        profile: &str,
        n: usize,
        snrs: &[f64],
        kinds: &[NoiseKind],
        base_seed: u64,
    ) -> Result<Self> {
        if snrs.is_empty() || kinds.is_empty() {
            return Err(Error::contract(
                "manifest needs at least one SNR and one noise kind",
            ));
        }
        let split_seed = mix_seed(base_seed, split.stream());
        let entries = (0..n)
            .map(|i| {
                let snr = snrs[i % snrs.len()];
                let kind = kinds[(i / snrs.len()) % kinds.len()].clone();
                Ok(ManifestEntry {
                    id: format!("{}_{i:05}", split.as_str()),
                    mix: MixSpec::new(snr, kind, mix_seed(split_seed, i as u64))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CorpusManifest::new(split, profile, entries)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# split={}\n# profile={}\n", self.split, self.profile);
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.id, e.mix.noise_kind, e.mix.snr_db, e.mix.seed
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut split = None;
        let mut profile = None;
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let line = line.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("split=") {
                    split = Some(
                        v.trim()
                            .parse::<Split>()
                            .map_err(|e| Error::parse(at, e.to_string()))?,
                    );
                } else if let Some(v) = meta.strip_prefix("profile=") {
                    profile = Some(v.trim().to_string());
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::parse(
                    at,
                    format!("expected 4 tab-separated fields, got {}", f.len()),
                ));
            }
            let kind = f[1]
                .parse::<NoiseKind>()
                .map_err(|e| Error::parse(at, e.to_string()))?;
            let snr = f[2]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(at, format!("bad SNR '{}'", f[2])))?;
            let seed = f[3]
                .parse::<u64>()
                .map_err(|_| Error::parse(at, format!("bad seed '{}'", f[3])))?;
            entries.push(ManifestEntry {
                id: f[0].to_string(),
                mix: MixSpec::new(snr, kind, seed)?,
            });
        }
        let split = split.ok_or_else(|| Error::parse(0, "manifest lacks a '# split=' line"))?;
        CorpusManifest::new(split, profile.unwrap_or_else(|| "desk".into()), entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CorpusManifest::parse(&std::fs::read_to_string(path)?)
    }
}
