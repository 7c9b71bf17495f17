//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! stft.profile = desk
//! train.loss = mae
//! data.snr_list = 0, 5, 10, 15
//! ```
//! Unknown keys and malformed values are rejected when the text is parsed.
//! [`RunConfig::to_text`] writes every key, so the echoed file reproduces the
//! run on its own.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{FeatureOptions, NoiseKind, NormMode, UtteranceSource, TEST_SNRS, TRAIN_SNRS};
use crate::error::{Error, Result};
use crate::experiment::Profile;
use crate::losses::{AlphaVector, LossKind, LossSpec};
use crate::network::TrainConfig;

/// Where LD/GD take their per-dimension scales from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSource {
    /// Per-bin std of the clean training LPS.
    TargetStd,
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub train_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub snr_list: Vec<f64>,
    pub test_snr_list: Vec<f64>,
    pub noise: Vec<NoiseKind>,
    pub data_seed: u64,
    pub min_secs: f64,
    pub max_secs: f64,
    pub context: usize,
    pub nat: bool,
    pub nat_frames: usize,
    pub norm: NormMode,
    pub gv: bool,
    pub alpha_source: AlphaSource,
    /// Trial count for `verify`; 0 picks each claim's default.
    pub verify_trials: usize,
    pub verify_draws: usize,
}

pub const KEYS: [&str; 25] = [
    "stft.profile",
    "train.loss",
    "train.lr",
    "train.momentum",
    "train.max_epochs",
    "train.batch",
    "train.patience",
    "train.validation",
    "train.seed",
    "data.n_train",
    "data.n_test",
    "data.snr_list",
    "data.test_snr_list",
    "data.noise",
    "data.seed",
    "data.min_secs",
    "data.max_secs",
    "features.context",
    "features.nat",
    "features.nat_frames",
    "features.norm",
    "features.gv",
    "alpha.source",
    "verify.trials",
    "verify.draws",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key} = '{value}': expected {expected}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| bad(key, value, expected))
}

fn positive_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value, "a positive number")?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "a positive number"))
    }
}

fn positive_usize(key: &str, value: &str) -> Result<usize> {
    let v: usize = parse_num(key, value, "a positive integer")?;
    if v == 0 {
        return Err(bad(key, value, "a positive integer"));
    }
    Ok(v)
}

fn on_off(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(bad(key, value, "on or off")),
    }
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "a nonempty comma-separated list"));
    }
    Ok(items)
}

fn snr_list(key: &str, value: &str) -> Result<Vec<f64>> {
    list(key, value, |s| {
        parse_num::<f64>(key, s, "finite SNRs in dB")
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(key, value, "finite SNRs in dB"))
    })
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Defaults for a profile: learning rate 1e-3, momentum 0.4, 20 epochs,
    /// context 3, plus the profile's batch size and patience.
    pub fn defaults(profile: Profile) -> Self {
        let train = profile.train_config(LossSpec::new(LossKind::Mae, None).expect("mae"), 0);
        RunConfig {
            profile,
            loss: LossKind::Mae,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            max_epochs: train.max_epochs,
            batch: train.batch_size,
            patience: train.patience,
            validation_fraction: train.validation_fraction,
            train_seed: 0,
            n_train: 200,
            n_test: 40,
            snr_list: TRAIN_SNRS.to_vec(),
            test_snr_list: TEST_SNRS.to_vec(),
            noise: NoiseKind::synthetic().to_vec(),
            data_seed: 1,
            min_secs: 1.0,
            max_secs: 2.0,
            context: 3,
            nat: false,
            nat_frames: 6,
            norm: NormMode::Global,
            gv: true,
            alpha_source: AlphaSource::TargetStd,
            verify_trials: 0,
            verify_draws: 100_000,
        }
    }

    /// Builds a config from `(key, value)` pairs applied in order on top of
    /// the defaults of the profile they name (or `fallback`).
    pub fn from_pairs(pairs: &[(String, String)], fallback: Profile) -> Result<Self> {
        let profile = match pairs.iter().rev().find(|(k, _)| k == "stft.profile") {
            Some((_, v)) => v.parse::<Profile>()?,
            None => fallback,
        };
        let mut cfg = RunConfig::defaults(profile);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, fallback: Profile) -> Result<Self> {
        RunConfig::from_pairs(&parse_pairs(text)?, fallback)
    }

    pub fn load(path: impl AsRef<Path>, fallback: Profile) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text, fallback)
    }

    /// Sets one key; the value is validated on its own. Cross-key checks run
    /// in [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            // Resolved up front by `from_pairs`; here it is only checked.
            "stft.profile" => {
                value.parse::<Profile>()?;
            }
            "train.loss" => self.loss = value.parse()?,
            "train.lr" => self.learning_rate = positive_f64(key, value)?,
            "train.momentum" => {
                let m: f64 = parse_num(key, value, "a number in [0, 1)")?;
                if !(0.0..1.0).contains(&m) {
                    return Err(bad(key, value, "a number in [0, 1)"));
                }
                self.momentum = m;
            }
            "train.max_epochs" => self.max_epochs = positive_usize(key, value)?,
            "train.batch" => self.batch = positive_usize(key, value)?,
            "train.patience" => self.patience = positive_usize(key, value)?,
            "train.validation" => {
                let v: f64 = parse_num(key, value, "a fraction in (0, 1)")?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(bad(key, value, "a fraction in (0, 1)"));
                }
                self.validation_fraction = v;
            }
            "train.seed" => self.train_seed = parse_num(key, value, "an unsigned integer")?,
            "data.n_train" => self.n_train = positive_usize(key, value)?,
            "data.n_test" => self.n_test = positive_usize(key, value)?,
            "data.snr_list" => self.snr_list = snr_list(key, value)?,
            "data.test_snr_list" => self.test_snr_list = snr_list(key, value)?,
            "data.noise" => self.noise = list(key, value, |s| s.parse::<NoiseKind>())?,
            "data.seed" => self.data_seed = parse_num(key, value, "an unsigned integer")?,
            "data.min_secs" => self.min_secs = positive_f64(key, value)?,
            "data.max_secs" => self.max_secs = positive_f64(key, value)?,
            "features.context" => {
                let c = positive_usize(key, value)?;
                if c % 2 == 0 {
                    return Err(bad(key, value, "an odd positive integer"));
                }
                self.context = c;
            }
            "features.nat" => self.nat = on_off(key, value)?,
            "features.nat_frames" => self.nat_frames = positive_usize(key, value)?,
            "features.norm" => {
                self.norm = match value {
                    "global" => NormMode::Global,
                    "utterance" => NormMode::PerUtterance,
                    _ => return Err(bad(key, value, "global or utterance")),
                }
            }
            "features.gv" => self.gv = on_off(key, value)?,
            "alpha.source" => {
                self.alpha_source = match value {
                    "target_std" => AlphaSource::TargetStd,
                    "unit" => AlphaSource::Unit,
                    _ => return Err(bad(key, value, "target_std or unit")),
                }
            }
            "verify.trials" => self.verify_trials = parse_num(key, value, "an unsigned integer")?,
            "verify.draws" => self.verify_draws = positive_usize(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}' (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_secs > self.max_secs {
            return Err(Error::Config(format!(
                "data.min_secs {} exceeds data.max_secs {}",
                self.min_secs, self.max_secs
            )));
        }
        if self.min_secs < crate::corpus::MIN_CLEAN_SECS {
            return Err(Error::Config(format!(
                "data.min_secs must be at least {}",
                crate::corpus::MIN_CLEAN_SECS
            )));
        }
        Ok(())
    }

    /// `--seed`: one number for both the training and the corpus seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.train_seed = seed;
        self.data_seed = seed;
    }

    /// Every key in [`KEYS`] order, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(&format!("{key} = {}\n", self.value(key)));
        }
        out
    }

    fn value(&self, key: &str) -> String {
        let onoff = |b: bool| if b { "on" } else { "off" }.to_string();
        match key {
            "stft.profile" => self.profile.to_string(),
            "train.loss" => self.loss.to_string(),
            "train.lr" => self.learning_rate.to_string(),
            "train.momentum" => self.momentum.to_string(),
            "train.max_epochs" => self.max_epochs.to_string(),
            "train.batch" => self.batch.to_string(),
            "train.patience" => self.patience.to_string(),
            "train.validation" => self.validation_fraction.to_string(),
            "train.seed" => self.train_seed.to_string(),
            "data.n_train" => self.n_train.to_string(),
            "data.n_test" => self.n_test.to_string(),
            "data.snr_list" => join(&self.snr_list),
            "data.test_snr_list" => join(&self.test_snr_list),
            "data.noise" => join(&self.noise),
            "data.seed" => self.data_seed.to_string(),
            "data.min_secs" => self.min_secs.to_string(),
            "data.max_secs" => self.max_secs.to_string(),
            "features.context" => self.context.to_string(),
            "features.nat" => onoff(self.nat),
            "features.nat_frames" => self.nat_frames.to_string(),
            "features.norm" => match self.norm {
                NormMode::Global => "global".into(),
                NormMode::PerUtterance => "utterance".into(),
            },
            "features.gv" => onoff(self.gv),
            "alpha.source" => match self.alpha_source {
                AlphaSource::TargetStd => "target_std".into(),
                AlphaSource::Unit => "unit".into(),
            },
            "verify.trials" => self.verify_trials.to_string(),
            "verify.draws" => self.verify_draws.to_string(),
            _ => unreachable!("every key in KEYS has a value"),
        }
    }

    pub fn features(&self) -> FeatureOptions {
        FeatureOptions {
            stft: self.profile.stft(),
            context: self.context,
            nat: self.nat,
            nat_frames: self.nat_frames,
            norm: self.norm,
        }
    }

    pub fn source(&self) -> UtteranceSource {
        UtteranceSource::Synthetic {
            min_secs: self.min_secs,
            max_secs: self.max_secs,
        }
    }

    /// Training settings; `target_std` supplies α when the loss needs it.
    pub fn train_config(&self, target_std: &[f64]) -> Result<TrainConfig> {
        let alpha = if self.loss.needs_alpha() {
            Some(match self.alpha_source {
                AlphaSource::TargetStd => AlphaVector::from_std(target_std)?,
                AlphaSource::Unit => AlphaVector::constant(target_std.len(), 1.0)?,
            })
        } else {
            None
        };
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            max_epochs: self.max_epochs,
            validation_fraction: self.validation_fraction,
            batch_size: self.batch,
            loss: LossSpec::new(self.loss, alpha)?,
            seed: self.train_seed,
            patience: self.patience,
            hidden: self.profile.hidden(),
        })
    }
}

/// Splits config text into `(key, value)` pairs. Duplicate keys are an error.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", n + 1)));
        }
        if let Some(first) = seen.insert(k.to_string(), n + 1) {
            return Err(Error::Config(format!(
                "line {}: '{k}' already set on line {first}",
                n + 1
            )));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

/// Parses a `--set key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let text = "train.loss = gd\ndata.snr_list = 0\nfeatures.nat = on # noise-aware\n";
        let cfg = RunConfig::parse(text, Profile::Desk).unwrap();
        assert_eq!(cfg.snr_list, vec![0.0]);
        assert!(cfg.nat);
        let again = RunConfig::parse(&cfg.to_text(), Profile::Paper).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn defaults_follow_profile() {
        let desk = RunConfig::defaults(Profile::Desk);
        assert_eq!(
            (desk.learning_rate, desk.momentum, desk.max_epochs),
            (1e-3, 0.4, 20)
        );
        assert_eq!(desk.context, 3);
        let paper = RunConfig::parse("stft.profile = paper", Profile::Desk).unwrap();
        assert_eq!(paper.batch, 128);
        assert_eq!(paper.features().input_dim(), 771);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "train.nope = 1",
            "train.lr = -1",
            "train.lr = abc",
            "train.momentum = 1",
            "features.context = 4",
            "features.nat = yes",
            "data.snr_list = ,",
            "data.snr_list = 0, inf",
            "data.noise = brown",
            "alpha.source = other",
            "stft.profile = huge",
            "train.loss = huber",
            "train.batch = 0",
            "data.min_secs = 3",
            "no equals sign",
            "train.lr = 1\ntrain.lr = 2",
        ] {
            assert!(RunConfig::parse(text, Profile::Desk).is_err(), "{text}");
        }
    }
}
