//! Dense matrices, seeded random streams, the Adam optimizer and a
//! central-difference gradient checker.
//!
//! Everything is double precision. Model parameters are exposed to the
//! optimizer and to the gradient checker through [`ParamSet`], which lists
//! named matrix blocks in a fixed order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Column vector (n x 1).
    pub fn column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers are responsible for keeping
    /// entries finite; [`Matrix::is_finite`] re-checks.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// `out = self * x` for a dense vector `x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `self += alpha * u v^T`.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (row, &ui) in self.data.chunks_exact_mut(self.cols).zip(u) {
            let s = alpha * ui;
            if s != 0.0 {
                axpy(s, v, row);
            }
        }
    }

    /// `out += self^T * y`.
    pub fn add_matvec_transposed(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += alpha * other`, shapes must agree.
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} to {:?}",
                other.shape(),
                self.shape()
            )));
        }
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            axpy(aik, b.row(k), out_row);
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("matmul output".into()));
    }
    Ok(out)
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Relative error with an absolute floor so that two tiny numbers compare
/// as equal instead of dividing by ~0.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded, counter-based random stream.
///
/// Substreams are derived from `(seed, stream path)` only, never from how
/// much the parent has been consumed, so generation order across consumers
/// does not affect their outputs.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `id`.
    pub fn substream(&self, id: u64) -> Self {
        let stream = splitmix64(self.stream.rotate_left(17) ^ splitmix64(id.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Index drawn from a discrete distribution (weights need not sum to 1).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

/// A fixed, ordered list of named matrix blocks.
///
/// `blocks` and `blocks_mut` must list the same blocks in the same order.
/// Gradient containers use the same type as the parameters they belong to.
pub trait ParamSet {
    fn blocks(&self) -> Vec<(String, &Matrix)>;
    fn blocks_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    fn zero(&mut self) {
        for m in self.blocks_mut() {
            m.fill(0.0);
        }
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn scale(&mut self, alpha: f64) {
        for m in self.blocks_mut() {
            m.data_mut().iter_mut().for_each(|v| *v *= alpha);
        }
    }

    /// `self += alpha * other`.
    fn accumulate(&mut self, alpha: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let src: Vec<&Matrix> = other.blocks().into_iter().map(|(_, m)| m).collect();
        let dst = self.blocks_mut();
        if src.len() != dst.len() {
            return Err(Error::Shape("parameter sets differ in block count".into()));
        }
        for (d, s) in dst.into_iter().zip(src) {
            d.add_scaled(alpha, s)?;
        }
        Ok(())
    }

    /// Name of the first block holding a non-finite value.
    fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|(_, m)| !m.is_finite())
            .map(|(n, _)| n)
    }
}

impl ParamSet for Vec<Matrix> {
    fn blocks(&self) -> Vec<(String, &Matrix)> {
        self.iter()
            .enumerate()
            .map(|(i, m)| (format!("block{i}"), m))
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.iter_mut().collect()
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam state. Moments are allocated lazily on the first
/// step to match the parameter set's block shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Coordinates whose gradient is exactly zero keep
    /// their parameter and moment values, so an all-zero gradient leaves the
    /// parameters untouched regardless of accumulated momentum.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        let shapes: Vec<(usize, usize)> = params.blocks().iter().map(|(_, m)| m.shape()).collect();
        if grad_blocks.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "{} gradient blocks for {} parameter blocks",
                grad_blocks.len(),
                shapes.len()
            )));
        }
        for ((name, g), shape) in grad_blocks.iter().zip(&shapes) {
            if g.shape() != *shape {
                return Err(Error::Shape(format!(
                    "gradient `{name}` is {:?}, parameter is {:?}",
                    g.shape(),
                    shape
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient block `{name}`")));
            }
        }
        if self.first.is_empty() {
            self.first = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
            self.second = self.first.clone();
        } else if self.first.iter().map(Matrix::shape).ne(shapes.iter().copied()) {
            return Err(Error::Shape("moment shapes do not match parameters".into()));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (((p, (_, g)), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(&grad_blocks)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central difference for one coordinate `(block, index)`.
pub fn finite_diff_entry<P, F>(f: &mut F, params: &mut P, block: usize, index: usize, h: f64) -> Result<f64>
where
    P: ParamSet,
    F: FnMut(&P) -> f64,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Invalid(format!("finite-difference step must be > 0, got {h}")));
    }
    let original = {
        let mut blocks = params.blocks_mut();
        let m = blocks
            .get_mut(block)
            .ok_or_else(|| Error::Shape(format!("no parameter block {block}")))?;
        let x = m.data()[index];
        m.data_mut()[index] = x + h;
        x
    };
    let plus = f(params);
    params.blocks_mut()[block].data_mut()[index] = original - h;
    let minus = f(params);
    params.blocks_mut()[block].data_mut()[index] = original;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective at block {block} index {index}"
        )));
    }
    Ok((plus - minus) / (2.0 * h))
}

/// Full central-difference gradient `(f(x+h) - f(x-h)) / 2h` per coordinate.
pub fn finite_diff_grad<P, F>(mut f: F, params: &P, h: f64) -> Result<P>
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> f64,
{
    let mut work = params.clone();
    let mut grad = params.zeros_like();
    let sizes: Vec<usize> = params.blocks().iter().map(|(_, m)| m.len()).collect();
    for (b, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let d = finite_diff_entry(&mut f, &mut work, b, i, h)?;
            grad.blocks_mut()[b].data_mut()[i] = d;
        }
    }
    Ok(grad)
}
