use crate::error::{ensure_dim, Error, Result};
use crate::network::Mlp;
use crate::numerics::{norm2, spectral_norm, SPECTRAL_MAX_ITER, SPECTRAL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzMethod {
    /// Analytic upper bound from layer spectral norms.
    SpectralUpper,
    /// Largest gradient norm seen over a probe set; a lower estimate of the sup.
    EmpiricalSup,
}

/// Per-output Lipschitz constants `L_{2,i}` of a network and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub per_output: Vec<f64>,
    pub total: f64,
    pub method: LipschitzMethod,
    /// Number of probe points (zero for the analytic bound).
    pub probe_count: usize,
}

impl LipschitzEstimate {
    fn new(per_output: Vec<f64>, method: LipschitzMethod, probe_count: usize) -> Self {
        let total = per_output.iter().sum();
        LipschitzEstimate {
            per_output,
            total,
            method,
            probe_count,
        }
    }
}

/// Upper bound `‖row_i(W_out)‖₂ · Π_hidden ‖W_k‖₂` for each output `i`.
///
/// Valid because ReLU is 1-Lipschitz and biases do not affect gradients.
pub fn lipschitz_upper(net: &Mlp) -> Result<LipschitzEstimate> {
    let layers = net.layers();
    let (last, hidden) = layers
        .split_last()
        .expect("networks have at least one layer");
    let mut product = 1.0;
    for layer in hidden {
        product *= spectral_norm(layer.weights(), SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    }
    let w = last.weights();
    let per_output = (0..w.rows()).map(|i| norm2(w.row(i)) * product).collect();
    Ok(LipschitzEstimate::new(
        per_output,
        LipschitzMethod::SpectralUpper,
        0,
    ))
}

/// `max_probe ‖∇f_i(probe)‖₂` for each output `i`.
pub fn lipschitz_empirical<P: AsRef<[f64]>>(net: &Mlp, probes: &[P]) -> Result<LipschitzEstimate> {
    if probes.is_empty() {
        return Err(Error::contract(
            "lipschitz_empirical needs at least one probe",
        ));
    }
    let mut per_output = vec![0.0f64; net.output_dim()];
    for p in probes {
        ensure_dim(net.input_dim(), p.as_ref().len(), "probe")?;
        let j = net.input_jacobian(p.as_ref())?;
        for (i, best) in per_output.iter_mut().enumerate() {
            *best = best.max(norm2(j.row(i)));
        }
    }
    Ok(LipschitzEstimate::new(
        per_output,
        LipschitzMethod::EmpiricalSup,
        probes.len(),
    ))
}
