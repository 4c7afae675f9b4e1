//! Dense double-precision kernel: matrices, affine layers, ReLU, the Gaussian
//! KL term, Adam and seeded Gaussian sampling.
//!
//! Backward passes are written out by hand for each layer type; the networks
//! in this crate are all two-layer MLPs, so there is no general tape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Seedable, portable generator used by every stochastic operation.
pub type Rng = ChaCha8Rng;

/// Generator for `seed`, on an independent `stream`.
///
/// Distinct streams of the same seed never overlap, which lets callers derive
/// per-purpose generators (noise, reparameterization, shuffling) from a single
/// user-facing seed.
pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod math {
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn expm1(x: f64) -> f64 {
        libm::expm1(x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn powi(x: f64, n: i32) -> f64 {
        libm::pow(x, n as f64)
    }
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. Panics on ragged input; meant
    /// for literals and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
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
        if self.cols != other.rows {
            return Err(Error::dim("matmul", self.shape(), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out);
        Ok(out)
    }

    /// Rows gathered in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: indices.len(), cols: self.cols, data }
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Matrix { rows: self.rows, cols: width, data }
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        for p in parts {
            if p.rows != rows {
                return Err(Error::dim("hcat", (rows, 0), p.shape()));
            }
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Vertical concatenation.
    pub fn vcat(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::dim("vcat", (0, cols), p.shape()));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.into()))
        }
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        let n = self.rows.max(1) as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    }

    pub(crate) fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
///
/// Shapes are the caller's responsibility and are only debug-asserted.
pub fn gemm(alpha: f64, a: &Matrix, trans_a: bool, b: &Matrix, trans_b: bool, beta: f64, c: &mut Matrix) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    debug_assert_eq!(k, kb);
    debug_assert_eq!(c.shape(), (m, n));
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the strides above describe exactly the row-major buffers of `a`,
    // `b` and `c`, whose lengths match the (m, k), (k, n) and (m, n) extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// Learnable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub value: Matrix,
    pub grad: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
    pub step_count: u64,
}

impl ParamTensor {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// One bias-corrected Adam update over every tensor in `params`.
///
/// All gradients are checked before any value moves, so a non-finite gradient
/// leaves the parameters untouched.
pub fn adam_step(params: &mut [&mut ParamTensor], cfg: &AdamConfig) -> Result<()> {
    if let Some(bad) = params.iter().position(|p| !p.grad.is_finite()) {
        return Err(Error::Diverged(format!("non-finite gradient in parameter tensor {bad}")));
    }
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - math::powi(cfg.beta1, t);
        let bc2 = 1.0 - math::powi(cfg.beta2, t);
        let value = p.value.data.iter_mut();
        let grad = p.grad.data.iter();
        let m = p.adam_m.data.iter_mut();
        let v = p.adam_v.data.iter_mut();
        for (((x, &g), m), v) in value.zip(grad).zip(m).zip(v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *x -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}

/// `x · w + b`, with `b` a single row broadcast over the batch.
pub fn affine_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols != w.rows {
        return Err(Error::dim("affine_forward (x, w)", x.shape(), w.shape()));
    }
    if b.shape() != (1, w.cols) {
        return Err(Error::dim("affine_forward (w, b)", w.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(x.rows, w.cols);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(&b.data);
    }
    gemm(1.0, x, false, w, false, 1.0, &mut out);
    Ok(out)
}

/// Gradients `(dx, dw, db)` of an affine layer given the upstream gradient.
pub fn affine_backward(upstream: &Matrix, x: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    if x.cols != w.rows {
        return Err(Error::dim("affine_backward (x, w)", x.shape(), w.shape()));
    }
    if upstream.shape() != (x.rows, w.cols) {
        return Err(Error::dim("affine_backward (upstream)", upstream.shape(), (x.rows, w.cols)));
    }
    let mut dw = Matrix::zeros(w.rows, w.cols);
    gemm(1.0, x, true, upstream, false, 0.0, &mut dw);
    let mut dx = Matrix::zeros(x.rows, x.cols);
    gemm(1.0, upstream, false, w, true, 0.0, &mut dx);
    let db = Matrix { rows: 1, cols: w.cols, data: upstream.column_sums() };
    Ok((dx, dw, db))
}

impl Matrix {
    fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }
}

/// Fully connected layer with learnable weight `[in × out]` and bias `[1 × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Linear {
    /// Fan-in scaled uniform initialization: weights and biases drawn from
    /// `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / math::sqrt(input.max(1) as f64);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let w = draw(input * output);
        let b = draw(output);
        Linear {
            weight: ParamTensor::new(Matrix { rows: input, cols: output, data: w }),
            bias: ParamTensor::new(Matrix { rows: 1, cols: output, data: b }),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: ParamTensor::new(Matrix::zeros(input, output)),
            bias: ParamTensor::new(Matrix::zeros(1, output)),
        }
    }

    pub fn from_values(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.shape() != (1, weight.cols) {
            return Err(Error::dim("Linear::from_values", weight.shape(), bias.shape()));
        }
        Ok(Linear { weight: ParamTensor::new(weight), bias: ParamTensor::new(bias) })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        affine_forward(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates parameter gradients and returns the gradient wrt `x`.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        let (dx, dw, db) = affine_backward(upstream, x, &self.weight.value)?;
        for (g, d) in self.weight.grad.data.iter_mut().zip(&dw.data) {
            *g += d;
        }
        for (g, d) in self.bias.grad.data.iter_mut().zip(&db.data) {
            *g += d;
        }
        Ok(dx)
    }

    /// Like [`Linear::backward`] but skips the input gradient, for first layers.
    pub fn backward_params(&mut self, x: &Matrix, upstream: &Matrix) -> Result<()> {
        if upstream.shape() != (x.rows, self.output_dim()) || x.cols != self.input_dim() {
            return Err(Error::dim("Linear::backward_params", x.shape(), upstream.shape()));
        }
        gemm(1.0, x, true, upstream, false, 1.0, &mut self.weight.grad);
        for (g, d) in self.bias.grad.data.iter_mut().zip(upstream.column_sums()) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient through ReLU; the derivative at exactly zero is taken as zero.
pub fn relu_backward(pre_activation: &Matrix, upstream: &Matrix) -> Matrix {
    let data = pre_activation
        .data
        .iter()
        .zip(&upstream.data)
        .map(|(&p, &u)| if p > 0.0 { u } else { 0.0 })
        .collect();
    Matrix { rows: upstream.rows, cols: upstream.cols, data }
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` summed over the batch and latent dims.
pub fn gaussian_kl(mu: &Matrix, logvar: &Matrix) -> Result<f64> {
    mu.check_same_shape(logvar, "gaussian_kl")?;
    let mut total = 0.0;
    for (&m, &lv) in mu.data.iter().zip(&logvar.data) {
        if !lv.is_finite() || !m.is_finite() {
            return Err(Error::NonFinite("gaussian_kl input".into()));
        }
        // 0.5 * (mu^2 + e^lv - 1 - lv), each term non-negative since e^x >= 1 + x
        let term = 0.5 * (m * m + (math::expm1(lv) - lv));
        total += term.max(0.0);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("gaussian_kl".into()));
    }
    Ok(total)
}

/// Gradient of `scale * gaussian_kl(mu, logvar)` wrt `(mu, logvar)`.
pub fn gaussian_kl_backward(mu: &Matrix, logvar: &Matrix, scale: f64) -> (Matrix, Matrix) {
    let dmu = mu.map(|m| scale * m);
    let dlv = logvar.map(|lv| scale * 0.5 * math::expm1(lv));
    (dmu, dlv)
}

/// Matrix of i.i.d. standard normal draws, fully determined by `seed`.
pub fn sample_standard_normal(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    fill_standard_normal(&mut m, &mut rng_for(seed, 0));
    m
}

pub fn fill_standard_normal(m: &mut Matrix, rng: &mut Rng) {
    for v in m.data.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
