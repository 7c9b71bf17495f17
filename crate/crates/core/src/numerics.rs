//! Dense linear algebra, the seeded random stream, and the spectral norm.
//!
//! Everything here is `f64`. Vectors and matrices are plain owned buffers with
//! the shape checked at construction; operations that could produce non-finite
//! values report a contract violation instead of returning them.

use std::ops::{Deref, Index};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};

/// Seed of the power-iteration start vector, fixed so spectral norms are reproducible.
pub const POWER_ITERATION_SEED: u64 = 0xA11CE;
pub const SPECTRAL_TOL: f64 = 1e-13;
pub const SPECTRAL_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::contract("vector must have dim >= 1"));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("vector entry {i} is not finite")));
        }
        Ok(Vector(data))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dim must be positive");
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm1(&self) -> f64 {
        norm1(&self.0)
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl TryFrom<&[f64]> for Vector {
    type Error = Error;
    fn try_from(v: &[f64]) -> Result<Self> {
        Vector::new(v.to_vec())
    }
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inner product over the common prefix, summed in four interleaved lanes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("matrix must have positive rows and cols"));
        }
        ensure_dim(rows * cols, data.len(), "matrix data length")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::contract("ragged rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        ensure_dim(self.cols, other.rows, "matmul inner dimension")?;
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

/// `y = M x` on raw slices; shapes are the caller's responsibility.
pub(crate) fn gemv(m: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (r, yr) in y.iter_mut().enumerate().take(rows) {
        *yr = dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `y = Mᵀ x` on raw slices.
pub(crate) fn gemv_t(m: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    y[..cols].iter_mut().for_each(|v| *v = 0.0);
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        for (yc, w) in y.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *yc += xr * w;
        }
    }
}

pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    ensure_dim(m.cols, v.len(), "matvec")?;
    let mut out = vec![0.0; m.rows];
    gemv(&m.data, m.rows, m.cols, v, &mut out);
    Vector::new(out)
}

pub fn matvec_transposed(m: &Matrix, v: &[f64]) -> Result<Vector> {
    ensure_dim(m.rows, v.len(), "transposed matvec")?;
    let mut out = vec![0.0; m.cols];
    gemv_t(&m.data, m.rows, m.cols, v, &mut out);
    Vector::new(out)
}

/// Largest singular value by power iteration on `MᵀM`.
///
/// The start vector is a standard-normal draw from [`POWER_ITERATION_SEED`].
/// Each step reports `‖MᵀMv‖ / ‖Mv‖` for the current unit iterate `v`, which
/// never exceeds the true value and is never below `‖Mv‖`. Iteration stops once
/// successive estimates differ by at most `tol` relative.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::contract("spectral_norm tolerance must be positive"));
    }
    if m.data.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = SeededRng::new(POWER_ITERATION_SEED);
    let start: Vec<f64> = (0..m.cols).map(|_| rng.standard_normal()).collect();
    match power_iterate(m, start, tol, max_iter)? {
        Some(sigma) => Ok(sigma),
        None => {
            // Start vector fell in the null space; the largest-norm column of
            // Mᵀ (a row of M) cannot.
            let best = (0..m.rows)
                .max_by(|&a, &b| norm2(m.row(a)).total_cmp(&norm2(m.row(b))))
                .unwrap_or(0);
            let start = m.row(best).to_vec();
            power_iterate(m, start, tol, max_iter)?
                .ok_or_else(|| Error::contract("spectral_norm: degenerate start vector"))
        }
    }
}

/// `Ok(None)` when the iterate is annihilated by `M`.
fn power_iterate(m: &Matrix, mut v: Vec<f64>, tol: f64, max_iter: usize) -> Result<Option<f64>> {
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    let mut w = vec![0.0; m.rows];
    let mut u = vec![0.0; m.cols];
    let mut prev = f64::NAN;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        gemv(&m.data, m.rows, m.cols, &v, &mut w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(None);
        }
        gemv_t(&m.data, m.rows, m.cols, &w, &mut u);
        let un = norm2(&u);
        estimate = un / wn;
        v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi = ui / un);
        if (estimate - prev).abs() <= tol * estimate {
            return Ok(Some(estimate));
        }
        prev = estimate;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_estimate: estimate,
        last_iterate: v,
    })
}

/// Deterministic random stream backed by ChaCha8.
///
/// The generator is counter-based and its output is defined bit-for-bit by the
/// seed, independent of platform. Uniform doubles take the top 53 bits of a
/// 64-bit draw; normals use the Box–Muller transform, consuming draws in pairs.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, e.g. one per Monte-Carlo draw or per utterance.
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(mix_seed(self.seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` by rejection (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn sign(&mut self) -> i8 {
        if self.next_u64() >> 63 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finalizer over a (seed, stream) pair.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_standard_normal(rng: &mut SeededRng, n: usize) -> Result<Vector> {
    if n == 0 {
        return Err(Error::contract("sample_standard_normal needs n >= 1"));
    }
    Vector::new((0..n).map(|_| rng.standard_normal()).collect())
}
