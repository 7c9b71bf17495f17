//! Randomized suites behind `v2v verify`.

use std::fmt;

use super::{
    check_mae_lipschitz, check_noise_bound, construct_mse_violation, lipschitz_empirical,
    lipschitz_upper, rademacher_exact, rademacher_mc, FamilyMember, FunctionFamily, TheoryReport,
    BOUND_TOLERANCE,
};
use crate::error::Result;
use crate::losses::{gd_loss, ld_loss, mae, mse, AlphaVector, LossKind, LossSpec, SampleBatch};
use crate::network::{init_mlp, train, LayerSpec, Mlp, TrainConfig};
use crate::numerics::{Matrix, SeededRng, Vector};

/// Aggregate result of a randomized suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub claim: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Failures tolerated before the suite counts as failed.
    pub allowed_failures: usize,
    /// Report with the smallest margin seen.
    pub worst: Option<TheoryReport>,
    pub note: String,
}

impl SuiteOutcome {
    fn new(claim: &'static str) -> Self {
        SuiteOutcome {
            claim,
            trials: 0,
            failures: 0,
            allowed_failures: 0,
            worst: None,
            note: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures <= self.allowed_failures
    }

    fn record(&mut self, report: TheoryReport, ok: bool) {
        self.trials += 1;
        if !ok {
            self.failures += 1;
        }
        if self
            .worst
            .as_ref()
            .map_or(true, |w| report.margin < w.margin)
        {
            self.worst = Some(report);
        }
    }
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} trials={} failures={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.claim,
            self.trials,
            self.failures
        )?;
        if let Some(w) = &self.worst {
            write!(f, " worst_margin={:.3e}", w.margin)?;
        }
        if !self.note.is_empty() {
            write!(f, " {}", self.note)?;
        }
        Ok(())
    }
}

fn random_vector(rng: &mut SeededRng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.standard_normal()).collect()
}

/// MAE 1-Lipschitz gap on random triples; a trial fails if `lhs > rhs + tol`.
pub fn lemma1_suite(trials: usize, dims: &[usize], tol: f64, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = SeededRng::new(seed);
    let mut out = SuiteOutcome::new("lemma1");
    for t in 0..trials {
        let d = dims[t % dims.len()];
        let scale = rng.uniform_range(0.5, 2.0);
        let x1 = random_vector(&mut rng, d, scale);
        let x2 = random_vector(&mut rng, d, scale);
        let x = random_vector(&mut rng, d, scale);
        let r = check_mae_lipschitz(&x1, &x2, &x)?;
        let ok = r.lhs <= r.rhs + tol;
        out.record(r, ok);
    }
    Ok(out)
}

/// MSE counterexample on random pairs ordered so that `‖x₂‖ > ‖x₁‖`.
pub fn lemma2_suite(trials: usize, dims: &[usize], seed: u64) -> Result<SuiteOutcome> {
    let mut rng = SeededRng::new(seed);
    let mut out = SuiteOutcome::new("lemma2");
    let mut t = 0;
    while out.trials < trials {
        let d = dims[t % dims.len()];
        t += 1;
        let mut x1 = random_vector(&mut rng, d, 1.0);
        let mut x2 = random_vector(&mut rng, d, 1.0);
        let n1: f64 = x1.iter().map(|v| v * v).sum();
        let n2: f64 = x2.iter().map(|v| v * v).sum();
        if n1 == n2 {
            continue;
        }
        if n1 > n2 {
            std::mem::swap(&mut x1, &mut x2);
        }
        let r = construct_mse_violation(&x1, &x2)?;
        let ok = r.holds;
        out.record(r, ok);
    }
    Ok(out)
}

/// Additive-noise bound at random points drawn from `inputs`, with noise
/// norms log-uniform in `[1e-3, 1]`.
///
/// Also checks the sandwich `EmpiricalSup ≤ SpectralUpper` on up to 64 of the
/// inputs; a sandwich breach counts as one failure.
pub fn theorem1_suite<X: AsRef<[f64]>>(
    net: &Mlp,
    inputs: &[X],
    trials: usize,
    seed: u64,
) -> Result<SuiteOutcome> {
    let mut rng = SeededRng::new(seed);
    let mut out = SuiteOutcome::new("theorem1");
    let upper = lipschitz_upper(net)?;
    let d = net.input_dim();
    for _ in 0..trials {
        let x = inputs[rng.below(inputs.len() as u64) as usize].as_ref();
        let dir = random_vector(&mut rng, d, 1.0);
        let len = crate::numerics::norm2(&dir);
        let magnitude = 10f64.powf(rng.uniform_range(-3.0, 0.0));
        let eta: Vec<f64> = dir.iter().map(|v| v / len * magnitude).collect();
        let r = check_noise_bound(net, x, &eta, None, &upper)?;
        let ok = r.holds;
        out.record(r, ok);
    }
    let probes: Vec<&[f64]> = inputs.iter().take(64).map(|x| x.as_ref()).collect();
    let empirical = lipschitz_empirical(net, &probes)?;
    let sandwich = empirical.total <= upper.total + BOUND_TOLERANCE;
    if !sandwich {
        out.failures += 1;
    }
    out.note = format!(
        "L2_upper={:.4e} L2_empirical={:.4e} sandwich={}",
        upper.total, empirical.total, sandwich
    );
    Ok(out)
}

/// Monte-Carlo versus exact Rademacher complexity on random small instances.
///
/// An instance agrees when `|mc − exact| ≤ 3 · std_error` (or `≤ 1e-12` when
/// the draws had no spread). The suite passes with at least 99 % agreement.
pub fn rademacher_suite(instances: usize, draws: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = SeededRng::new(seed);
    let mut out = SuiteOutcome::new("rademacher");
    out.allowed_failures = instances / 100;
    for k in 0..instances {
        let n = 1 + rng.below(12) as usize;
        let d = 1 + rng.below(4) as usize;
        let samples: Vec<Vec<f64>> = (0..n).map(|_| random_vector(&mut rng, d, 1.0)).collect();
        let family = if k % 2 == 0 {
            FunctionFamily::LinearBall {
                radius: rng.uniform_range(0.5, 2.0),
                dim: d,
            }
        } else {
            let members = 1 + rng.below(5) as usize;
            FunctionFamily::FiniteSet(
                (0..members)
                    .map(|m| {
                        let q = 1 + rng.below(3) as usize;
                        if m % 2 == 0 {
                            let w = random_vector(&mut rng, q * d, 1.0);
                            Ok(FamilyMember::Linear(Matrix::new(q, d, w)?))
                        } else {
                            let net = init_mlp(&LayerSpec::chain(d, &[4], q), rng.next_u64())?;
                            Ok(FamilyMember::Network(net))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let exact = rademacher_exact(&samples, &family)?;
        let mut draw_rng = rng.derive(k as u64);
        let mc = rademacher_mc(&samples, &family, draws, &mut draw_rng)?;
        let diff = (mc.value - exact.value).abs();
        let allowed = if mc.std_error > 0.0 {
            3.0 * mc.std_error
        } else {
            1e-12
        };
        let report = TheoryReport::bound(
            "rademacher",
            crate::digest::short_digest(&[&[k as f64, n as f64]]),
            diff,
            allowed,
        );
        out.record(report, diff <= allowed);
    }
    let closed_form = rademacher_exact(
        &[vec![1.0], vec![1.0]],
        &FunctionFamily::LinearBall {
            radius: 1.0,
            dim: 1,
        },
    )?;
    if closed_form.value != 0.5 {
        out.failures = instances + 1;
    }
    out.note = format!("closed_form_N2={}", closed_form.value);
    Ok(out)
}

/// LD/GD reduce to MAE/MSE: exactly at unit scales, by a constant otherwise,
/// and the explicit rescaled forms agree with the decomposed ones. Also checks
/// that LD and MAE training with a constant α follow the same trajectory.
pub fn losses_equivalence_suite(trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = SeededRng::new(seed);
    let mut out = SuiteOutcome::new("losses-equivalence");
    for _ in 0..trials {
        let n = 1 + rng.below(5) as usize;
        let q = 1 + rng.below(6) as usize;
        let batch = random_batch(&mut rng, n, q)?;
        let unit = AlphaVector::constant(q, 1.0)?;
        let exact =
            ld_loss(&batch, &unit)? == mae(&batch) && gd_loss(&batch, &unit)? == mse(&batch);
        out.record(
            TheoryReport::bound("losses-unit-alpha", String::new(), 0.0, 0.0),
            exact,
        );

        let alpha = AlphaVector::new((0..q).map(|_| rng.uniform_range(0.2, 3.0)).collect())?;
        let (ld_fast, gd_fast) = (ld_loss(&batch, &alpha)?, gd_loss(&batch, &alpha)?);
        let (ld_slow, gd_slow) = rescaled_forms(&batch, &alpha);
        let err = (ld_fast - ld_slow).abs().max((gd_fast - gd_slow).abs());
        let scale = 1.0 + ld_fast.abs().max(gd_fast.abs());
        out.record(
            TheoryReport::bound("losses-rescaled-form", String::new(), err, 1e-12 * scale),
            err <= 1e-12 * scale,
        );
    }

    let (same, steps) = ld_mae_trajectories_match(seed)?;
    out.record(
        TheoryReport::bound("losses-ld-trajectory", String::new(), 0.0, 0.0),
        same,
    );
    out.note = format!("trajectory_epochs={steps}");
    Ok(out)
}

fn random_batch(rng: &mut SeededRng, n: usize, q: usize) -> Result<SampleBatch> {
    let p = (0..n)
        .map(|_| Vector::new(random_vector(rng, q, 2.0)))
        .collect::<Result<_>>()?;
    let t = (0..n)
        .map(|_| Vector::new(random_vector(rng, q, 2.0)))
        .collect::<Result<_>>()?;
    SampleBatch::new(p, t)
}

/// LD and GD evaluated by explicitly forming `α ⊙ x`, `α ⊙ y` and dividing by
/// `α` (or `α²`) before adding `N Σ ln α`.
pub fn rescaled_forms(batch: &SampleBatch, alpha: &AlphaVector) -> (f64, f64) {
    let a = alpha.as_slice();
    let n = batch.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (p, t) in batch.predictions().iter().zip(batch.targets()) {
        for m in 0..a.len() {
            let fh = a[m] * p[m];
            let yh = a[m] * t[m];
            abs_sum += (fh - yh).abs() / a[m];
            sq_sum += (fh - yh).powi(2) / (a[m] * a[m]);
        }
    }
    let log_term = n * alpha.log_sum();
    (abs_sum / n + log_term, sq_sum / n + log_term)
}

/// Trains the same network under MAE and under LD with a constant α and
/// compares the parameters and per-epoch data losses bit for bit.
pub fn ld_mae_trajectories_match(seed: u64) -> Result<(bool, usize)> {
    let mut rng = SeededRng::new(seed ^ 0x1D);
    let xs: Vec<Vec<f64>> = (0..200).map(|_| random_vector(&mut rng, 3, 1.0)).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![x[0] - 2.0 * x[1] + 0.3 * rng.standard_normal(), x[2].abs()])
        .collect();
    let base = TrainConfig {
        hidden: vec![8],
        batch_size: 16,
        learning_rate: 0.01,
        max_epochs: 8,
        patience: 8,
        seed,
        ..TrainConfig::default()
    };
    let mae_cfg = TrainConfig {
        loss: LossSpec::new(LossKind::Mae, None)?,
        ..base.clone()
    };
    let alpha = AlphaVector::constant(2, 2.5)?;
    let ld_cfg = TrainConfig {
        loss: LossSpec::new(LossKind::Ld, Some(alpha.clone()))?,
        ..base
    };
    let (net_mae, log_mae) = train(&xs, &ys, &mae_cfg)?;
    let (net_ld, log_ld) = train(&xs, &ys, &ld_cfg)?;
    let params_equal = net_mae.parameters() == net_ld.parameters();
    let n_val = 20.0;
    let epochs_equal = log_mae.epochs.len() == log_ld.epochs.len()
        && log_mae.best_epoch == log_ld.best_epoch
        && log_mae.epochs.iter().zip(&log_ld.epochs).all(|(a, b)| {
            let shifted = b.validation_loss - n_val * alpha.log_sum();
            (a.validation_loss - shifted).abs() <= 1e-9 * (1.0 + a.validation_loss.abs())
        });
    Ok((params_equal && epochs_equal, log_mae.epochs.len()))
}
