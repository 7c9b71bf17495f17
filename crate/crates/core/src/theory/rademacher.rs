use log::debug;

use crate::error::{ensure_dim, Error, Result};
use crate::network::Mlp;
use crate::numerics::{matvec, norm2, Matrix, SeededRng};

/// Largest sample count accepted by [`rademacher_exact`] (2^N sign vectors).
pub const EXACT_MAX_SAMPLES: usize = 20;

/// Independent uniform ±1 values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RademacherSigns(Vec<i8>);

impl RademacherSigns {
    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `n` signs. Signs are read from the bits of successive 64-bit draws,
/// least significant bit first; a set bit is `+1`.
pub fn sample_signs(n: usize, rng: &mut SeededRng) -> Result<RademacherSigns> {
    if n == 0 {
        return Err(Error::contract("sample_signs needs n >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    fill_signs(rng, n, &mut out);
    Ok(RademacherSigns(out))
}

fn fill_signs(rng: &mut SeededRng, n: usize, out: &mut Vec<i8>) {
    out.clear();
    while out.len() < n {
        let word = rng.next_u64();
        let take = (n - out.len()).min(64);
        out.extend((0..take).map(|b| if (word >> b) & 1 == 1 { 1 } else { -1 }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyMember {
    Network(Mlp),
    /// `x ↦ M x`.
    Linear(Matrix),
}

impl FamilyMember {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FamilyMember::Network(net) => Ok(net.forward(x)?.into_inner()),
            FamilyMember::Linear(m) => Ok(matvec(m, x)?.into_inner()),
        }
    }
}

/// Hypothesis spaces with a computable inner supremum.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionFamily {
    /// `{x ↦ wᵀx : ‖w‖₂ ≤ radius}` on `R^dim`.
    LinearBall { radius: f64, dim: usize },
    /// Finitely many vector-valued maps; the sup is an exact max.
    FiniteSet(Vec<FamilyMember>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
    pub exact: bool,
}

/// The inner supremum `sup_f (1/N) Σ_i σ_i 𝟙ᵀ f(x_i)` prepared for repeated sign vectors.
enum Prepared {
    Ball {
        radius: f64,
        samples: Vec<Vec<f64>>,
    },
    /// `scores[f][i] = 𝟙ᵀ f(x_i)`.
    Finite {
        scores: Vec<Vec<f64>>,
    },
}

impl Prepared {
    fn new<S: AsRef<[f64]>>(samples: &[S], family: &FunctionFamily) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract(
                "Rademacher estimation needs at least one sample",
            ));
        }
        match family {
            FunctionFamily::LinearBall { radius, dim } => {
                if !(*radius > 0.0) {
                    return Err(Error::contract("LinearBall radius must be positive"));
                }
                for s in samples {
                    ensure_dim(*dim, s.as_ref().len(), "sample")?;
                }
                Ok(Prepared::Ball {
                    radius: *radius,
                    samples: samples.iter().map(|s| s.as_ref().to_vec()).collect(),
                })
            }
            FunctionFamily::FiniteSet(members) => {
                if members.is_empty() {
                    return Err(Error::contract("FiniteSet family must be nonempty"));
                }
                let scores = members
                    .iter()
                    .map(|m| {
                        samples
                            .iter()
                            .map(|s| m.eval(s.as_ref()).map(|y| y.iter().sum()))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Prepared::Finite { scores })
            }
        }
    }

    fn n(&self) -> usize {
        match self {
            Prepared::Ball { samples, .. } => samples.len(),
            Prepared::Finite { scores } => scores[0].len(),
        }
    }

    fn sup(&self, signs: &[i8], scratch: &mut Vec<f64>) -> f64 {
        let n = self.n() as f64;
        match self {
            Prepared::Ball { radius, samples } => {
                // Cauchy–Schwarz: attained at w = radius · s / ‖s‖.
                scratch.clear();
                scratch.resize(samples[0].len(), 0.0);
                for (x, s) in samples.iter().zip(signs) {
                    let s = f64::from(*s);
                    scratch.iter_mut().zip(x).for_each(|(a, v)| *a += s * v);
                }
                radius * norm2(scratch) / n
            }
            Prepared::Finite { scores } => {
                scores
                    .iter()
                    .map(|sc| {
                        sc.iter()
                            .zip(signs)
                            .map(|(v, s)| f64::from(*s) * v)
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
                    / n
            }
        }
    }
}

fn clamp_nonnegative(value: f64) -> f64 {
    if value < 0.0 {
        debug!("Rademacher estimate {value} clamped to 0");
        0.0
    } else {
        value
    }
}

/// Monte-Carlo average of the inner supremum over `draws` sign vectors.
///
/// `std_error` is the sample standard deviation over draws divided by
/// `sqrt(draws)`. Negative averages, possible only through sampling noise, are
/// clamped to zero.
pub fn rademacher_mc<S: AsRef<[f64]>>(
    samples: &[S],
    family: &FunctionFamily,
    draws: usize,
    rng: &mut SeededRng,
) -> Result<RademacherEstimate> {
    if draws == 0 {
        return Err(Error::contract("rademacher_mc needs draws >= 1"));
    }
    let prepared = Prepared::new(samples, family)?;
    let n = prepared.n();
    let mut signs = Vec::with_capacity(n);
    let mut scratch = Vec::new();
    // Welford running moments.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..draws {
        fill_signs(rng, n, &mut signs);
        let v = prepared.sup(&signs, &mut scratch);
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std_error = if draws > 1 {
        (m2 / (draws - 1) as f64).sqrt() / (draws as f64).sqrt()
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        value: clamp_nonnegative(mean),
        std_error,
        draws,
        exact: false,
    })
}

/// Exact expectation over all `2^N` sign vectors.
pub fn rademacher_exact<S: AsRef<[f64]>>(
    samples: &[S],
    family: &FunctionFamily,
) -> Result<RademacherEstimate> {
    if samples.len() > EXACT_MAX_SAMPLES {
        return Err(Error::TooLarge {
            n: samples.len(),
            max: EXACT_MAX_SAMPLES,
        });
    }
    let prepared = Prepared::new(samples, family)?;
    let n = prepared.n();
    let total = 1usize << n;
    let mut signs = vec![0i8; n];
    let mut scratch = Vec::new();
    let mut sum = 0.0;
    for mask in 0..total {
        for (i, s) in signs.iter_mut().enumerate() {
            *s = if (mask >> i) & 1 == 1 { 1 } else { -1 };
        }
        sum += prepared.sup(&signs, &mut scratch);
    }
    Ok(RademacherEstimate {
        value: clamp_nonnegative(sum / total as f64),
        std_error: 0.0,
        draws: total,
        exact: true,
    })
}
