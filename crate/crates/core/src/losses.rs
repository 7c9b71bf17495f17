//! MAE, MSE and their per-dimension-scale generalizations (LD, GD).
//!
//! Batch losses follow `(1/N) Σ_i ‖x_i − y_i‖` with the L1 norm for MAE and the
//! squared L2 norm for MSE; the sum runs over dimensions, not averaged. LD and GD
//! add the prediction-independent term `N · Σ_m ln α_m`.

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::Vector;

/// Lower bound applied when α is derived from data.
pub const ALPHA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mae,
    Mse,
    /// Laplacian-scale form of MAE.
    Ld,
    /// Gaussian-scale form of MSE.
    Gd,
}

impl LossKind {
    pub fn needs_alpha(self) -> bool {
        matches!(self, LossKind::Ld | LossKind::Gd)
    }

    /// True for the L1 family (MAE, LD).
    pub fn is_absolute(self) -> bool {
        matches!(self, LossKind::Mae | LossKind::Ld)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
            LossKind::Ld => "ld",
            LossKind::Gd => "gd",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            "ld" => Ok(LossKind::Ld),
            "gd" => Ok(LossKind::Gd),
            other => Err(Error::Config(format!(
                "unknown loss '{other}' (expected mae, mse, ld, gd)"
            ))),
        }
    }
}

/// Per-dimension scales α_m, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector(Vector);

impl AlphaVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let v = Vector::new(alpha)?;
        if let Some(m) = v.iter().position(|a| *a <= 0.0) {
            return Err(Error::contract(format!(
                "alpha[{m}] = {} is not positive",
                v[m]
            )));
        }
        Ok(AlphaVector(v))
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        AlphaVector::new(vec![value; dim])
    }

    /// Scales taken from per-dimension standard deviations, floored at [`ALPHA_FLOOR`].
    pub fn from_std(std: &[f64]) -> Result<Self> {
        AlphaVector::new(std.iter().map(|s| s.max(ALPHA_FLOOR)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn log_sum(&self) -> f64 {
        self.0.iter().map(|a| a.ln()).sum()
    }
}

/// Paired predictions and targets, `N ≥ 1`, all of one dimension `q`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    predictions: Vec<Vector>,
    targets: Vec<Vector>,
}

impl SampleBatch {
    pub fn new(predictions: Vec<Vector>, targets: Vec<Vector>) -> Result<Self> {
        ensure_dim(predictions.len(), targets.len(), "batch size")?;
        if predictions.is_empty() {
            return Err(Error::contract("batch must contain at least one sample"));
        }
        let q = predictions[0].dim();
        for (i, (p, t)) in predictions.iter().zip(&targets).enumerate() {
            ensure_dim(q, p.dim(), &format!("prediction {i}"))?;
            ensure_dim(q, t.dim(), &format!("target {i}"))?;
        }
        Ok(SampleBatch {
            predictions,
            targets,
        })
    }

    pub fn from_slices(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        let p = predictions
            .iter()
            .cloned()
            .map(Vector::new)
            .collect::<Result<_>>()?;
        let t = targets
            .iter()
            .cloned()
            .map(Vector::new)
            .collect::<Result<_>>()?;
        SampleBatch::new(p, t)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.predictions[0].dim()
    }

    pub fn predictions(&self) -> &[Vector] {
        &self.predictions
    }

    pub fn targets(&self) -> &[Vector] {
        &self.targets
    }

    fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.predictions
            .iter()
            .zip(&self.targets)
            .map(|(p, t)| (p.as_slice(), t.as_slice()))
    }
}

/// `‖p − t‖₁` for the L1 family, `‖p − t‖₂²` otherwise.
#[inline]
pub(crate) fn residual_term(kind: LossKind, pred: &[f64], target: &[f64]) -> f64 {
    if kind.is_absolute() {
        pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum()
    } else {
        pred.iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum()
    }
}

/// Writes `scale · ∂(residual_term)/∂pred` into `out`.
#[inline]
pub(crate) fn residual_gradient(
    kind: LossKind,
    pred: &[f64],
    target: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    if kind.is_absolute() {
        for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
            *o = scale * sign(p - t);
        }
    } else {
        for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
            *o = scale * 2.0 * (p - t);
        }
    }
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_residual(kind: LossKind, batch: &SampleBatch) -> f64 {
    let total: f64 = batch.pairs().map(|(p, t)| residual_term(kind, p, t)).sum();
    total / batch.len() as f64
}

pub fn mae(batch: &SampleBatch) -> f64 {
    mean_residual(LossKind::Mae, batch)
}

pub fn mse(batch: &SampleBatch) -> f64 {
    mean_residual(LossKind::Mse, batch)
}

fn scale_term(batch: &SampleBatch, alpha: &AlphaVector) -> Result<f64> {
    ensure_dim(batch.dim(), alpha.dim(), "alpha")?;
    Ok(batch.len() as f64 * alpha.log_sum())
}

/// `mae(batch) + N · Σ_m ln α_m`.
pub fn ld_loss(batch: &SampleBatch, alpha: &AlphaVector) -> Result<f64> {
    Ok(mae(batch) + scale_term(batch, alpha)?)
}

/// `mse(batch) + N · Σ_m ln α_m`.
pub fn gd_loss(batch: &SampleBatch, alpha: &AlphaVector) -> Result<f64> {
    Ok(mse(batch) + scale_term(batch, alpha)?)
}

/// A loss kind together with the scales the LD/GD forms need.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    alpha: Option<AlphaVector>,
}

impl LossSpec {
    pub fn new(kind: LossKind, alpha: Option<AlphaVector>) -> Result<Self> {
        if kind.needs_alpha() && alpha.is_none() {
            return Err(Error::contract(format!(
                "{kind} loss requires an alpha vector"
            )));
        }
        Ok(LossSpec { kind, alpha })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn alpha(&self) -> Option<&AlphaVector> {
        self.alpha.as_ref()
    }

    pub fn evaluate(&self, batch: &SampleBatch) -> Result<f64> {
        match (self.kind, &self.alpha) {
            (LossKind::Mae, _) => Ok(mae(batch)),
            (LossKind::Mse, _) => Ok(mse(batch)),
            (LossKind::Ld, Some(a)) => ld_loss(batch, a),
            (LossKind::Gd, Some(a)) => gd_loss(batch, a),
            _ => unreachable!("alpha presence checked at construction"),
        }
    }

    /// Prediction-independent part of the loss for a batch of `n` samples.
    pub(crate) fn constant_term(&self, n: usize) -> f64 {
        match (&self.alpha, self.kind.needs_alpha()) {
            (Some(a), true) => n as f64 * a.log_sum(),
            _ => 0.0,
        }
    }
}

/// Gradient of the batch loss with respect to one sample's prediction.
///
/// MAE and LD give `sign(p − t) / n_batch` with `sign(0) = 0`; MSE and GD give
/// `2 (p − t) / n_batch`. The α terms do not depend on the prediction.
pub fn loss_gradient(
    kind: LossKind,
    prediction: &[f64],
    target: &[f64],
    n_batch: usize,
    alpha: Option<&AlphaVector>,
) -> Result<Vector> {
    ensure_dim(prediction.len(), target.len(), "loss_gradient")?;
    if n_batch == 0 {
        return Err(Error::contract("n_batch must be >= 1"));
    }
    if kind.needs_alpha() {
        let a = alpha.ok_or_else(|| Error::contract(format!("{kind} gradient requires alpha")))?;
        ensure_dim(prediction.len(), a.dim(), "alpha")?;
    }
    let mut out = vec![0.0; prediction.len()];
    residual_gradient(kind, prediction, target, 1.0 / n_batch as f64, &mut out);
    Vector::new(out)
}
