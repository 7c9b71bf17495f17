//! Evaluation: feature-domain MAE/MSE, STOI and segmental SNR.

mod stoi;

pub use stoi::{resample, stoi, STOI_TOO_SHORT};

use std::fmt::Write as _;

use crate::corpus::FeatureShard;
use crate::digest::short_digest;
use crate::dsp::Waveform;
use crate::error::{ensure_dim, Error, Result};
use crate::losses::{mae, mse, SampleBatch};
use crate::network::Mlp;
use crate::numerics::Vector;

pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;
/// Frames more than this far below the loudest clean frame are inactive.
pub const SEG_SNR_ACTIVITY_DB: f64 = 40.0;

/// MAE and MSE of `model` on a shard, in the shard's (normalized) domain.
pub fn eval_features(model: &Mlp, shard: &FeatureShard) -> Result<(f64, f64)> {
    ensure_dim(model.input_dim(), shard.d_in(), "shard inputs")?;
    ensure_dim(model.output_dim(), shard.d_out(), "shard targets")?;
    if shard.rows() == 0 {
        return Err(Error::contract("shard has no rows"));
    }
    let mut preds = Vec::with_capacity(shard.rows());
    let mut targets = Vec::with_capacity(shard.rows());
    for i in 0..shard.rows() {
        let x: Vec<f64> = shard.input(i).iter().map(|v| f64::from(*v)).collect();
        preds.push(model.forward(&x)?);
        targets.push(Vector::new(
            shard.target(i).iter().map(|v| f64::from(*v)).collect(),
        )?);
    }
    let batch = SampleBatch::new(preds, targets)?;
    Ok((mae(&batch), mse(&batch)))
}

/// Mean over active frames of `10 log10(Σ clean² / Σ (clean − processed)²)`,
/// each frame clamped to `[-10, 35]` dB.
///
/// Frames are non-overlapping and `frame` samples long (a trailing partial
/// frame is ignored). A frame is active when its clean energy is within
/// 40 dB of the loudest clean frame.
pub fn seg_snr(clean: &Waveform, processed: &Waveform, frame: usize) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::contract(format!(
            "seg_snr needs equal lengths, got {} and {}",
            clean.len(),
            processed.len()
        )));
    }
    if frame < 64 {
        return Err(Error::contract(format!(
            "seg_snr frame must be >= 64 samples, got {frame}"
        )));
    }
    let per_frame: Vec<(f64, f64)> = clean
        .samples()
        .chunks_exact(frame)
        .zip(processed.samples().chunks_exact(frame))
        .map(|(c, p)| {
            let signal: f64 = c.iter().map(|v| v * v).sum();
            let noise: f64 = c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            (signal, noise)
        })
        .collect();
    let max = per_frame.iter().map(|f| f.0).fold(0.0f64, f64::max);
    if max == 0.0 {
        return Err(Error::contract("clean signal is silent"));
    }
    let threshold = max * 10f64.powf(-SEG_SNR_ACTIVITY_DB / 10.0);
    let active: Vec<f64> = per_frame
        .iter()
        .filter(|(s, _)| *s > 0.0 && *s >= threshold)
        .map(|(s, n)| {
            let db = if *n == 0.0 {
                SEG_SNR_MAX_DB
            } else {
                10.0 * (s / n).log10()
            };
            db.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
        })
        .collect();
    Ok(active.iter().sum::<f64>() / active.len() as f64)
}

/// Per-utterance scores of a processed signal next to its unprocessed input.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub snr_db: f64,
    pub noise: String,
    pub stoi: f64,
    pub stoi_noisy: f64,
    pub seg_snr_db: f64,
    pub seg_snr_noisy_db: f64,
}

pub const DETAIL_HEADER: &str =
    "# id\tsnr_db\tnoise\tstoi\tstoi_noisy\tseg_snr_db\tseg_snr_noisy_db";

impl UtteranceScore {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.id,
            self.snr_db,
            self.noise,
            self.stoi,
            self.stoi_noisy,
            self.seg_snr_db,
            self.seg_snr_noisy_db
        )
    }
}

/// Corpus-level scores of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    /// Feature-domain errors on normalized targets.
    pub mae: f64,
    pub mse: f64,
    /// The same errors on raw (denormalized) log-power features.
    pub mae_raw: f64,
    pub mse_raw: f64,
    pub stoi: f64,
    pub seg_snr_db: f64,
    pub utterance_count: usize,
    /// Unprocessed-input scores: noisy features under the target
    /// normalization, and the noisy waveforms.
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub mae: f64,
    pub mse: f64,
    pub stoi: f64,
    pub seg_snr_db: f64,
}

impl EvalReport {
    /// One record per metric in the six-column report format:
    /// `metric  digest  value  baseline  improved  gain`, where `gain` is the
    /// improvement over the baseline (positive is better for every metric).
    /// Without a baseline the value is repeated and the gain is 0.
    pub fn to_records(&self) -> String {
        let b = self.baseline;
        let digest = short_digest(&[&[
            self.mae,
            self.mse,
            self.stoi,
            self.seg_snr_db,
            self.utterance_count as f64,
        ]]);
        let rows: [(&str, f64, Option<f64>, bool); 6] = [
            ("mae", self.mae, b.map(|b| b.mae), false),
            ("mse", self.mse, b.map(|b| b.mse), false),
            ("mae_raw", self.mae_raw, None, false),
            ("mse_raw", self.mse_raw, None, false),
            ("stoi", self.stoi, b.map(|b| b.stoi), true),
            ("seg_snr_db", self.seg_snr_db, b.map(|b| b.seg_snr_db), true),
        ];
        let mut out = String::new();
        for (name, value, base, higher_better) in rows {
            let base = base.unwrap_or(value);
            let gain = if higher_better {
                value - base
            } else {
                base - value
            };
            let _ = writeln!(
                out,
                "{}.{name}\t{digest}\t{value}\t{base}\t{}\t{gain}",
                self.label,
                gain > 0.0
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seg_snr_clamps() {
        let c: Vec<f64> = (0..256).map(|i| ((i as f64) * 0.3).sin() * 0.5).collect();
        let w = Waveform::new(c.clone(), 8000).unwrap();
        assert_eq!(seg_snr(&w, &w, 128).unwrap(), 35.0);
        let zero = Waveform::new(vec![0.0; 256], 8000).unwrap();
        assert!((seg_snr(&w, &zero, 128).unwrap()).abs() < 1e-12);
        assert!(seg_snr(&zero, &w, 128).is_err());
        assert!(seg_snr(&w, &w, 32).is_err());
    }

    #[test]
    fn records_have_six_columns() {
        let r = EvalReport {
            label: "mae_model".into(),
            mae: 0.5,
            mse: 0.7,
            mae_raw: 1.0,
            mse_raw: 2.0,
            stoi: 0.8,
            seg_snr_db: 5.0,
            utterance_count: 3,
            baseline: Some(Baseline {
                mae: 0.9,
                mse: 1.1,
                stoi: 0.7,
                seg_snr_db: 2.0,
            }),
        };
        let text = r.to_records();
        assert_eq!(text.lines().count(), 6);
        for line in text.lines() {
            let rec = crate::theory::TheoryReport::parse_record(line).unwrap();
            assert!(rec.claim.starts_with("mae_model."));
        }
        assert!(text.lines().next().unwrap().ends_with("\ttrue\t0.4"));
    }
}
