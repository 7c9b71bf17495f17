use std::time::{Duration, Instant};

use log::{debug, info};

use super::{init_mlp, Gradients, LayerSpec, Mlp};
use crate::error::{ensure_dim, Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::numerics::SeededRng;

/// Mini-batch SGD settings. Defaults: lr 1e-3, momentum 0.4, 20 epochs, 10 %
/// validation split, batch 128, patience 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub loss: LossSpec,
    pub seed: u64,
    pub patience: usize,
    /// Hidden ReLU widths used by [`train`] when it builds the initial network.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.4,
            max_epochs: 20,
            validation_fraction: 0.1,
            batch_size: 128,
            loss: LossSpec::new(LossKind::Mae, None).expect("mae needs no alpha"),
            seed: 0,
            patience: 1,
            hidden: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract("momentum must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::contract("validation_fraction must lie in (0, 1)"));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::contract(
                "max_epochs, batch_size and patience must be >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    pub validation_loss: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Zero-based index of the epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn validation_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.validation_loss).collect()
    }

    pub fn best_validation_loss(&self) -> f64 {
        self.epochs[self.best_epoch].validation_loss
    }

    /// Tab-separated `epoch  train_loss  validation_loss` lines. Wall times are
    /// left out so the file is reproducible.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# epoch\ttrain_loss\tvalidation_loss\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                i + 1,
                e.train_loss,
                e.validation_loss
            ));
        }
        let reason = match self.stop_reason {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
        };
        out.push_str(&format!(
            "# stop_reason\t{reason}\n# best_epoch\t{}\n",
            self.best_epoch + 1
        ));
        out
    }
}

/// Equality ignores wall-clock times.
impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.stop_reason == other.stop_reason
            && self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.validation_loss.to_bits() == b.validation_loss.to_bits()
            })
    }
}

const INIT_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Trains a fresh network with `cfg.hidden` ReLU layers and a linear output.
pub fn train<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    inputs: &[X],
    targets: &[Y],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainLog)> {
    let d = inputs.first().map(|x| x.as_ref().len()).unwrap_or(0);
    let q = targets.first().map(|y| y.as_ref().len()).unwrap_or(0);
    if d == 0 || q == 0 {
        return Err(Error::contract("training data is empty"));
    }
    let spec = LayerSpec::chain(d, &cfg.hidden, q);
    let init = init_mlp(
        &spec,
        SeededRng::new(cfg.seed).derive(INIT_STREAM).next_u64(),
    )?;
    train_from(init, inputs, targets, cfg)
}

/// Shuffled mini-batch SGD with heavy-ball momentum, starting from `net`.
///
/// A seeded fraction of the data is held out for validation. Training stops
/// after `max_epochs` or once the validation loss has failed to improve for
/// `patience` consecutive epochs; the parameters of the best validation epoch
/// are returned.
pub fn train_from<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    mut net: Mlp,
    inputs: &[X],
    targets: &[Y],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainLog)> {
    cfg.validate()?;
    ensure_dim(inputs.len(), targets.len(), "inputs vs targets")?;
    if inputs.len() < 10 {
        return Err(Error::contract(format!(
            "training needs at least 10 samples, got {}",
            inputs.len()
        )));
    }
    if let Some(a) = cfg.loss.alpha() {
        ensure_dim(net.output_dim(), a.dim(), "alpha")?;
    }
    for (x, y) in inputs.iter().zip(targets) {
        ensure_dim(net.input_dim(), x.as_ref().len(), "training input")?;
        ensure_dim(net.output_dim(), y.as_ref().len(), "training target")?;
    }

    let root = SeededRng::new(cfg.seed);
    let n = inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    root.derive(SPLIT_STREAM).shuffle(&mut order);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_x: Vec<&[f64]> = val_idx.iter().map(|&i| inputs[i].as_ref()).collect();
    let val_y: Vec<&[f64]> = val_idx.iter().map(|&i| targets[i].as_ref()).collect();

    let mut shuffle_rng = root.derive(SHUFFLE_STREAM);
    let mut velocity = Gradients::zeros_like(&net);
    let mut grads = Gradients::zeros_like(&net);
    let mut best = (net.clone(), f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut since_improvement = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut train_idx);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_ref()).collect();
            let by: Vec<&[f64]> = chunk.iter().map(|&i| targets[i].as_ref()).collect();
            grads.values_mut().for_each(|g| *g = 0.0);
            let residual = net.accumulate_gradients(&bx, &by, &cfg.loss, &mut grads);
            loss_sum += residual / chunk.len() as f64 + cfg.loss.constant_term(chunk.len());
            batches += 1;
            for (v, g) in velocity.values_mut().zip(grads.values()) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
            }
            net.apply_update(&velocity);
        }
        let train_loss = loss_sum / batches as f64;
        // Early stopping compares the data term only; the α term is constant.
        let val_data = net.residual_sum(&val_x, &val_y, &cfg.loss) / val_x.len() as f64;
        let validation_loss = val_data + cfg.loss.constant_term(val_x.len());
        if !train_loss.is_finite() || !validation_loss.is_finite() || !net.all_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        let wall_time = started.elapsed();
        info!(
            "epoch {}: train {train_loss:.6} validation {validation_loss:.6} ({:.2?})",
            epoch + 1,
            wall_time
        );
        epochs.push(EpochRecord {
            train_loss,
            validation_loss,
            wall_time,
        });
        if val_data < best.1 {
            best = (net.clone(), val_data, epoch);
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                debug!(
                    "validation loss did not improve for {since_improvement} epoch(s); stopping"
                );
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    let (best_net, _, best_epoch) = best;
    Ok((
        best_net,
        TrainLog {
            epochs,
            stop_reason,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::linear_layer;
    use crate::numerics::Matrix;

    fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = SeededRng::new(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform_range(-3.0, 3.0)]).collect();
        let ys = xs.iter().map(|x| vec![2.0 * x[0]]).collect();
        (xs, ys)
    }

    #[test]
    fn recovers_least_squares_slope() {
        let (xs, ys) = linear_data(2000, 4);
        let cfg = TrainConfig {
            batch_size: 8,
            loss: LossSpec::new(LossKind::Mse, None).unwrap(),
            seed: 1,
            ..TrainConfig::default()
        };
        let net = linear_layer(Matrix::new(1, 1, vec![0.1]).unwrap(), vec![0.0]).unwrap();
        let (net, log) = train_from(net, &xs, &ys, &cfg).unwrap();
        let w = net.layers()[0].weights().get(0, 0);
        assert!(
            (w - 2.0).abs() < 1e-2,
            "w = {w}, log {:?}",
            log.validation_losses()
        );
    }

    #[test]
    fn identical_runs_identical_logs() {
        let (xs, ys) = linear_data(300, 8);
        let cfg = TrainConfig {
            hidden: vec![4],
            batch_size: 16,
            seed: 3,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let (a, la) = train(&xs, &ys, &cfg).unwrap();
        let (b, lb) = train(&xs, &ys, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn returns_best_validation_epoch() {
        let (xs, ys) = linear_data(200, 2);
        let cfg = TrainConfig {
            hidden: vec![3],
            batch_size: 4,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 6,
            patience: 3,
            max_epochs: 12,
            ..TrainConfig::default()
        };
        let (net, log) = train(&xs, &ys, &cfg).unwrap();
        let min = log
            .validation_losses()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(log.best_validation_loss(), min);
        // Re-evaluate the returned net on the same held-out split.
        let root = SeededRng::new(cfg.seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        root.derive(SPLIT_STREAM).shuffle(&mut order);
        let val: Vec<usize> = order[..20].to_vec();
        let vx: Vec<&[f64]> = val.iter().map(|&i| xs[i].as_slice()).collect();
        let vy: Vec<&[f64]> = val.iter().map(|&i| ys[i].as_slice()).collect();
        let loss = net.residual_sum(&vx, &vy, &cfg.loss) / vx.len() as f64;
        assert_eq!(loss, min);
    }

    #[test]
    fn rejects_small_or_bad_input() {
        let (xs, ys) = linear_data(9, 1);
        assert!(train(&xs, &ys, &TrainConfig::default()).is_err());
        let (xs, ys) = linear_data(20, 1);
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(train(&xs, &ys, &bad).is_err());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(train(&empty, &empty, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let (xs, ys) = linear_data(100, 1);
        let ys: Vec<Vec<f64>> = ys.iter().map(|y| vec![y[0] * 1e150]).collect();
        let cfg = TrainConfig {
            learning_rate: 1e10,
            loss: LossSpec::new(LossKind::Mse, None).unwrap(),
            batch_size: 10,
            ..TrainConfig::default()
        };
        let net = linear_layer(Matrix::new(1, 1, vec![0.0]).unwrap(), vec![0.0]).unwrap();
        match train_from(net, &xs, &ys, &cfg) {
            Err(Error::Diverged { epoch }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {:?}", other.map(|(_, l)| l)),
        }
    }
}
