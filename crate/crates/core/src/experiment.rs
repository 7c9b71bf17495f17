//! The enhancement chain and the MAE-versus-MSE comparison built on it.

use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;

use crate::corpus::{
    build_dataset, input_rows, load_utterance, utterance_features, CorpusManifest, Dataset,
    FeatureOptions, FeatureShard, FittedStats, Utterance, UtteranceFeatures, UtteranceSource,
};
use crate::dsp::{
    analyze, gv_equalize, lps, lps_to_spectrogram, per_bin_std, synthesize, GvStats, LpsSequence,
    StftConfig, Waveform, LPS_FLOOR,
};
use crate::error::{ensure_dim, Error, Result};
use crate::losses::{mae, mse, LossSpec, SampleBatch};
use crate::metrics::{eval_features, seg_snr, stoi, Baseline, EvalReport, UtteranceScore};
use crate::network::{train, Mlp, TrainConfig, TrainLog};
use crate::numerics::Vector;

/// Named STFT and network-size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// 8 kHz, 256-point frames, 387-128-128-129.
    #[default]
    Desk,
    /// 16 kHz, 512-point frames, 771-800x5-1600-257.
    Paper,
}

impl Profile {
    pub fn stft(self) -> StftConfig {
        match self {
            Profile::Desk => StftConfig::desk(),
            Profile::Paper => StftConfig::full(),
        }
    }

    pub fn hidden(self) -> Vec<usize> {
        match self {
            Profile::Desk => vec![128, 128],
            Profile::Paper => vec![800, 800, 800, 800, 800, 1600],
        }
    }

    /// Training settings for this profile: the shared defaults plus the
    /// profile's hidden widths, batch size and patience.
    pub fn train_config(self, loss: LossSpec, seed: u64) -> TrainConfig {
        let batch_size = match self {
            Profile::Desk => 16,
            Profile::Paper => 128,
        };
        TrainConfig {
            loss,
            seed,
            batch_size,
            patience: 3,
            hidden: self.hidden(),
            ..TrainConfig::default()
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!(
                "unknown profile '{s}' (desk, paper)"
            ))),
        }
    }
}

/// Everything the enhancement chain needs besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceSetup {
    pub features: FeatureOptions,
    pub stats: FittedStats,
    pub gv: bool,
}

/// Raw (denormalized) LPS predicted for a noisy LPS sequence.
pub fn predict_lps(
    model: &Mlp,
    noisy_lps: &LpsSequence,
    setup: &EnhanceSetup,
) -> Result<LpsSequence> {
    let rows = input_rows(noisy_lps, &setup.stats.input, &setup.features)?;
    ensure_dim(model.input_dim(), setup.features.input_dim(), "model input")?;
    ensure_dim(model.output_dim(), noisy_lps.bins(), "model output")?;
    let mut data = Vec::with_capacity(rows.len() * noisy_lps.bins());
    for r in &rows {
        let mut y = model.forward(r)?.into_inner();
        setup.stats.target.invert_frame(&mut y);
        data.extend_from_slice(&y);
    }
    LpsSequence::new(noisy_lps.frames(), data, *noisy_lps.config())
}

/// stft → lps → normalize → context (+NAT) → model → denormalize →
/// variance equalization → noisy-phase synthesis.
pub fn enhance(model: &Mlp, noisy: &Waveform, setup: &EnhanceSetup) -> Result<Waveform> {
    let cfg = setup.features.stft;
    if noisy.sample_rate() != cfg.sample_rate {
        return Err(Error::contract(format!(
            "input is {} Hz, the model expects {} Hz",
            noisy.sample_rate(),
            cfg.sample_rate
        )));
    }
    let spec = analyze(noisy, &cfg)?;
    let noisy_lps = lps(&spec, LPS_FLOOR)?;
    let mut enhanced = predict_lps(model, &noisy_lps, setup)?;
    if setup.gv {
        enhanced = gv_equalize(&enhanced, &setup.stats.gv)?;
    }
    let out = lps_to_spectrogram(&enhanced, &spec)?;
    let samples = synthesize(&out, &spec, &cfg, noisy.len())?;
    Waveform::clipped(samples, cfg.sample_rate)
}

/// Variance-equalization statistics with the produced std measured on the
/// model's denormalized predictions for `inputs`.
pub fn produced_gv(
    model: &Mlp,
    inputs: &[Vec<f64>],
    stats: &FittedStats,
    cfg: StftConfig,
) -> Result<GvStats> {
    let mut data = Vec::with_capacity(inputs.len() * model.output_dim());
    for x in inputs {
        let mut y = model.forward(x)?.into_inner();
        stats.target.invert_frame(&mut y);
        data.extend_from_slice(&y);
    }
    let seq = LpsSequence::new(inputs.len(), data, cfg)?;
    stats.gv.with_produced(Vector::new(per_bin_std(&[seq])?)?)
}

/// Loaded test utterances with their spectra.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub manifest: CorpusManifest,
    pub utterances: Vec<Utterance>,
    pub features: Vec<UtteranceFeatures>,
}

impl TestSet {
    pub fn load(
        manifest: CorpusManifest,
        source: &UtteranceSource,
        cfg: &StftConfig,
    ) -> Result<Self> {
        let split = manifest.split.as_str();
        let pairs: Vec<(Utterance, UtteranceFeatures)> = manifest
            .entries()
            .par_iter()
            .map(|e| {
                let u = load_utterance(e, split, source, cfg.sample_rate)?;
                let f = utterance_features(&u, cfg)?;
                Ok((u, f))
            })
            .collect::<Result<_>>()?;
        let (utterances, features) = pairs.into_iter().unzip();
        Ok(TestSet {
            manifest,
            utterances,
            features,
        })
    }
}

/// Normalized-domain test rows built with the training statistics.
pub fn test_shard(test: &TestSet, setup: &EnhanceSetup) -> Result<FeatureShard> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for f in &test.features {
        for r in input_rows(&f.noisy_lps, &setup.stats.input, &setup.features)? {
            inputs.extend(r.iter().map(|v| *v as f32));
        }
        let t = setup.stats.target.apply(&f.clean_lps)?;
        targets.extend(t.as_slice().iter().map(|v| *v as f32));
    }
    FeatureShard::new(
        setup.features.input_dim(),
        setup.features.stft.bins(),
        inputs,
        targets,
        [0; 32],
    )
}

/// Baseline scores of the unprocessed noisy input: features are the noisy LPS
/// under the target normalization, waveforms the noisy mixtures.
pub fn noisy_baseline(test: &TestSet, setup: &EnhanceSetup) -> Result<(Baseline, Vec<(f64, f64)>)> {
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for f in &test.features {
        let p = setup.stats.target.apply(&f.noisy_lps)?;
        let t = setup.stats.target.apply(&f.clean_lps)?;
        for (a, b) in p.iter_frames().zip(t.iter_frames()) {
            preds.push(Vector::new(a.to_vec())?);
            targets.push(Vector::new(b.to_vec())?);
        }
    }
    let batch = SampleBatch::new(preds, targets)?;
    let frame = setup.features.stft.fft_size;
    let sr = setup.features.stft.sample_rate;
    let per_utt: Vec<(f64, f64)> = test
        .utterances
        .par_iter()
        .map(|u| {
            Ok((
                stoi(&u.clean, &u.noisy, sr)?,
                seg_snr(&u.clean, &u.noisy, frame)?,
            ))
        })
        .collect::<Result<_>>()?;
    let n = per_utt.len() as f64;
    Ok((
        Baseline {
            mae: mae(&batch),
            mse: mse(&batch),
            stoi: per_utt.iter().map(|p| p.0).sum::<f64>() / n,
            seg_snr_db: per_utt.iter().map(|p| p.1).sum::<f64>() / n,
        },
        per_utt,
    ))
}

/// Scores a model on a test set: feature-domain errors on the normalized
/// test rows (and on raw LPS), and STOI / segmental SNR of the enhanced
/// waveforms against the clean ones.
pub fn evaluate_model(
    label: &str,
    model: &Mlp,
    test: &TestSet,
    setup: &EnhanceSetup,
    baseline: Option<&(Baseline, Vec<(f64, f64)>)>,
) -> Result<(EvalReport, Vec<UtteranceScore>)> {
    let shard = test_shard(test, setup)?;
    let (m_abs, m_sq) = eval_features(model, &shard)?;

    let frame = setup.features.stft.fft_size;
    let sr = setup.features.stft.sample_rate;
    let scored: Vec<(f64, f64, f64, f64, usize)> = test
        .utterances
        .par_iter()
        .zip(&test.features)
        .map(|(u, f)| {
            let raw = predict_lps(model, &f.noisy_lps, setup)?;
            let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
            for (p, t) in raw.as_slice().iter().zip(f.clean_lps.as_slice()) {
                abs_sum += (p - t).abs();
                sq_sum += (p - t) * (p - t);
            }
            let enhanced = enhance(model, &u.noisy, setup)?;
            Ok((
                stoi(&u.clean, &enhanced, sr)?,
                seg_snr(&u.clean, &enhanced, frame)?,
                abs_sum,
                sq_sum,
                raw.frames(),
            ))
        })
        .collect::<Result<_>>()?;
    let frames: usize = scored.iter().map(|s| s.4).sum();
    let n = scored.len() as f64;
    let details = test
        .manifest
        .entries()
        .iter()
        .zip(&scored)
        .enumerate()
        .map(|(i, (e, s))| UtteranceScore {
            id: e.id.clone(),
            snr_db: e.mix.snr_db,
            noise: e.mix.noise_kind.to_string(),
            stoi: s.0,
            stoi_noisy: baseline.map_or(f64::NAN, |b| b.1[i].0),
            seg_snr_db: s.1,
            seg_snr_noisy_db: baseline.map_or(f64::NAN, |b| b.1[i].1),
        })
        .collect();
    let report = EvalReport {
        label: label.to_string(),
        mae: m_abs,
        mse: m_sq,
        mae_raw: scored.iter().map(|s| s.2).sum::<f64>() / frames as f64,
        mse_raw: scored.iter().map(|s| s.3).sum::<f64>() / frames as f64,
        stoi: scored.iter().map(|s| s.0).sum::<f64>() / n,
        seg_snr_db: scored.iter().map(|s| s.1).sum::<f64>() / n,
        utterance_count: scored.len(),
        baseline: baseline.map(|b| b.0),
    };
    Ok((report, details))
}

/// A trained model with what is needed to run it.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Mlp,
    pub log: TrainLog,
    pub setup: EnhanceSetup,
}

/// Trains on a built dataset and measures produced variance statistics on
/// the training inputs.
pub fn train_on(
    dataset: &Dataset,
    features: &FeatureOptions,
    cfg: &TrainConfig,
    gv: bool,
) -> Result<TrainedModel> {
    let inputs = dataset.shard.inputs_f64();
    let targets = dataset.shard.targets_f64();
    let (model, log) = train(&inputs, &targets, cfg)?;
    info!(
        "trained {} seed {}: {} epochs, best {}",
        cfg.loss.kind(),
        cfg.seed,
        log.epochs.len(),
        log.best_epoch + 1
    );
    let mut stats = dataset.stats.clone();
    stats.gv = produced_gv(&model, &inputs, &stats, features.stft)?;
    Ok(TrainedModel {
        model,
        log,
        setup: EnhanceSetup {
            features: features.clone(),
            stats,
            gv,
        },
    })
}

/// Build the training dataset and the test set for one comparison.
pub fn prepare(
    train_manifest: &CorpusManifest,
    test_manifest: CorpusManifest,
    source: &UtteranceSource,
    features: &FeatureOptions,
) -> Result<(Dataset, TestSet)> {
    let dataset = build_dataset(train_manifest, source, features, None)?;
    let test = TestSet::load(test_manifest, source, &features.stft)?;
    Ok((dataset, test))
}
