//! Executable checks of the loss-function theory.
//!
//! * the 1-Lipschitz gap of MAE ([`check_mae_lipschitz`]) and the constructive
//!   counterexample for MSE ([`construct_mse_violation`]);
//! * network Lipschitz constants bracketed from above and below, and the
//!   additive-noise bound built on them ([`check_noise_bound`]);
//! * empirical Rademacher complexity, exact and Monte-Carlo.
//!
//! Every check returns a [`TheoryReport`].

mod lipschitz;
mod rademacher;
mod report;
pub mod suites;

pub use lipschitz::{lipschitz_empirical, lipschitz_upper, LipschitzEstimate, LipschitzMethod};
pub use rademacher::{
    rademacher_exact, rademacher_mc, sample_signs, FamilyMember, FunctionFamily,
    RademacherEstimate, RademacherSigns, EXACT_MAX_SAMPLES,
};
pub use report::{ClaimKind, TheoryReport, BOUND_TOLERANCE, RECORD_HEADER};

use log::debug;

use crate::digest::short_digest;
use crate::error::{ensure_dim, Error, Result};
use crate::losses::{residual_term, LossSpec};
use crate::network::Mlp;
use crate::numerics::norm2;

/// `|‖x₁ − x‖₁ − ‖x₂ − x‖₁| ≤ ‖x₁ − x₂‖₁`, which must always hold.
pub fn check_mae_lipschitz(x1: &[f64], x2: &[f64], x: &[f64]) -> Result<TheoryReport> {
    ensure_dim(x1.len(), x2.len(), "x2")?;
    ensure_dim(x1.len(), x.len(), "x")?;
    let d1: f64 = x1.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
    let d2: f64 = x2.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
    let rhs: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b).abs()).sum();
    Ok(TheoryReport::bound(
        "lemma1",
        short_digest(&[x1, x2, x]),
        (d1 - d2).abs(),
        rhs,
    ))
}

/// Builds the MSE counterexample: with `x = 2 x₂` and `‖x₂‖² > ‖x₁‖²`,
/// `|‖x₁ − x‖² − ‖x₂ − x‖²| > ‖x₁ − x₂‖²`.
pub fn construct_mse_violation(x1: &[f64], x2: &[f64]) -> Result<TheoryReport> {
    ensure_dim(x1.len(), x2.len(), "x2")?;
    let n1: f64 = x1.iter().map(|v| v * v).sum();
    let n2: f64 = x2.iter().map(|v| v * v).sum();
    if !(n2 > n1) {
        return Err(Error::Precondition(format!(
            "the construction needs ‖x2‖² > ‖x1‖² (got {n2} vs {n1})"
        )));
    }
    let x: Vec<f64> = x2.iter().map(|v| 2.0 * v).collect();
    let sq =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum() };
    let lhs = (sq(x1, &x) - sq(x2, &x)).abs();
    let rhs = sq(x1, x2);
    Ok(TheoryReport::violation(
        "lemma2",
        short_digest(&[x1, x2]),
        lhs,
        rhs,
    ))
}

/// Checks `|h(x + η) − h(x)| ≤ L₂ ‖η‖₂` with `h(x) = ‖f(x) − target‖₁`.
///
/// `target` defaults to the zero vector. Only an upper estimate of the
/// Lipschitz constant makes the check sound; empirical estimates are rejected.
pub fn check_noise_bound(
    net: &Mlp,
    x: &[f64],
    eta: &[f64],
    target: Option<&[f64]>,
    lipschitz: &LipschitzEstimate,
) -> Result<TheoryReport> {
    if lipschitz.method != LipschitzMethod::SpectralUpper {
        return Err(Error::UnsoundBound(
            "the noise bound needs an upper Lipschitz estimate; EmpiricalSup is a lower estimate"
                .into(),
        ));
    }
    ensure_dim(net.input_dim(), x.len(), "x")?;
    ensure_dim(net.input_dim(), eta.len(), "eta")?;
    ensure_dim(
        net.output_dim(),
        lipschitz.per_output.len(),
        "Lipschitz estimate",
    )?;
    let zero = vec![0.0; net.output_dim()];
    let target = target.unwrap_or(&zero);
    ensure_dim(net.output_dim(), target.len(), "target")?;

    let noisy: Vec<f64> = x.iter().zip(eta).map(|(a, b)| a + b).collect();
    let h = |v: &[f64]| -> Result<f64> {
        let y = net.forward(v)?;
        Ok(y.iter().zip(target).map(|(p, t)| (p - t).abs()).sum())
    };
    let lhs = (h(&noisy)? - h(x)?).abs();
    let rhs = lipschitz.total * norm2(eta);
    Ok(TheoryReport::bound(
        "theorem1",
        short_digest(&[x, eta, target]),
        lhs,
        rhs,
    ))
}

/// Train/held-out loss gap next to a Rademacher estimate over candidate networks.
///
/// `lhs` is `|held-out loss − training loss|` using the per-sample data term of
/// `loss`, a single-function lower proxy for the uniform estimation error. `rhs`
/// is the empirical Rademacher complexity of `snapshots` (or of `{net}` when
/// empty) on the training inputs: exact for up to [`EXACT_MAX_SAMPLES`] samples,
/// Monte-Carlo with 2000 draws otherwise. This is a diagnostic; `holds` is not a
/// claim.
pub fn generalization_probe<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    net: &Mlp,
    train: (&[X], &[Y]),
    held_out: (&[X], &[Y]),
    loss: &LossSpec,
    snapshots: &[Mlp],
) -> Result<TheoryReport> {
    let mean_loss = |xs: &[X], ys: &[Y]| -> Result<f64> {
        ensure_dim(xs.len(), ys.len(), "inputs vs targets")?;
        if xs.is_empty() {
            return Err(Error::contract("generalization_probe needs nonempty sets"));
        }
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let p = net.forward(x.as_ref())?;
            ensure_dim(p.dim(), y.as_ref().len(), "target")?;
            total += residual_term(loss.kind(), &p, y.as_ref());
        }
        Ok(total / xs.len() as f64)
    };
    let train_loss = mean_loss(train.0, train.1)?;
    let held_loss = mean_loss(held_out.0, held_out.1)?;

    let members = if snapshots.is_empty() {
        vec![FamilyMember::Network(net.clone())]
    } else {
        snapshots
            .iter()
            .cloned()
            .map(FamilyMember::Network)
            .collect()
    };
    let family = FunctionFamily::FiniteSet(members);
    let samples: Vec<&[f64]> = train.0.iter().map(|x| x.as_ref()).collect();
    let estimate = if samples.len() <= EXACT_MAX_SAMPLES {
        rademacher_exact(&samples, &family)?
    } else {
        let mut rng = crate::numerics::SeededRng::new(0x5EED);
        rademacher_mc(&samples, &family, 2000, &mut rng)?
    };
    debug!(
        "generalization probe: train {train_loss}, held-out {held_loss}, rademacher {} ± {}",
        estimate.value, estimate.std_error
    );
    let digest = short_digest(&[&[
        train_loss,
        held_loss,
        train.0.len() as f64,
        held_out.0.len() as f64,
    ]]);
    Ok(TheoryReport::diagnostic(
        "generalization",
        digest,
        (held_loss - train_loss).abs(),
        estimate.value,
    ))
}
