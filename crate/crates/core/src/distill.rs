//! Stage two: data-free distillation of the teacher's latent distribution.
//!
//! The student is a two-layer network `64 -> 32 -> 2k` fed only with standard
//! normal noise. Its objective per batch is
//!
//! ```text
//! (1/B) Σ_i Σ_j |z_ij - z'_ij|  +  (1/B) KL(N(mu', exp(logvar')) || N(0, I))
//! ```
//!
//! where `z` are teacher latents for a batch of data rows and `z'` are
//! reparameterized student samples. The teacher still sees data to produce
//! its targets; the student's forward path takes nothing but noise.
//!
//! Since the noise draw for a student sample has no relationship to any data
//! row, two pairings of `z` with `z'` are offered: `Direct` aligns batch
//! positions, `Sorted` sorts every latent dimension of both batches before
//! taking the L1 distance (a quantile-matching surrogate).

use alloc::format;
use alloc::vec::Vec;

use crate::encoding::{batch_indices, EncodedDataset};
use crate::error::{Error, Result};
use crate::fairvae::{encode_dataset, epoch_shuffle_seed, reparameterize, GaussianLatent, TeacherParams};
use crate::numkernel::{
    adam_step, fill_standard_normal, gaussian_kl, gaussian_kl_backward, math, relu, relu_backward, rng_for, AdamConfig,
    Linear, Matrix, ParamTensor, Rng,
};

pub const NOISE_DIM: usize = 64;
pub const STUDENT_HIDDEN_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    pub hidden: Linear,
    pub out: Linear,
    pub noise_dim: usize,
    pub latent_dim: usize,
}

impl StudentParams {
    pub fn init(latent_dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 1);
        StudentParams {
            hidden: Linear::init(NOISE_DIM, STUDENT_HIDDEN_DIM, &mut rng),
            out: Linear::init(STUDENT_HIDDEN_DIM, 2 * latent_dim, &mut rng),
            noise_dim: NOISE_DIM,
            latent_dim,
        }
    }

    pub fn from_layers(hidden: Linear, out: Linear) -> Result<Self> {
        if hidden.output_dim() != out.input_dim() || !out.output_dim().is_multiple_of(2) {
            return Err(Error::InvalidArgument("student layer shapes do not chain".into()));
        }
        Ok(StudentParams { noise_dim: hidden.input_dim(), latent_dim: out.output_dim() / 2, hidden, out })
    }

    pub fn layers(&self) -> [(&'static str, &Linear); 2] {
        [("hidden", &self.hidden), ("out", &self.out)]
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.out.param_count()
    }

    fn tensors_mut(&mut self) -> [&mut ParamTensor; 4] {
        [&mut self.hidden.weight, &mut self.hidden.bias, &mut self.out.weight, &mut self.out.bias]
    }

    fn zero_grad(&mut self) {
        self.hidden.zero_grad();
        self.out.zero_grad();
    }
}

/// Student pass: `(mu', logvar')` from noise, and `z' = mu' + exp(logvar'/2) * eps`.
pub fn student_forward(noise: &Matrix, eps: &Matrix, params: &StudentParams) -> Result<(GaussianLatent, Matrix)> {
    if noise.cols() != params.noise_dim {
        return Err(Error::dim("student_forward", noise.shape(), (noise.rows(), params.noise_dim)));
    }
    let h = relu(&params.hidden.forward(noise)?);
    let out = params.out.forward(&h)?;
    let k = params.latent_dim;
    let lat = GaussianLatent { mu: out.columns(0, k), logvar: out.columns(k, k) };
    let z = reparameterize(&lat, eps)?;
    Ok((lat, z))
}

/// Draws `n` student latent samples; noise and reparameterization draws come
/// from `seed`.
pub fn sample_student(params: &StudentParams, n: usize, seed: u64) -> Result<Matrix> {
    let mut noise = Matrix::zeros(n, params.noise_dim);
    fill_standard_normal(&mut noise, &mut rng_for(seed, 10));
    let mut eps = Matrix::zeros(n, params.latent_dim);
    fill_standard_normal(&mut eps, &mut rng_for(seed, 11));
    Ok(student_forward(&noise, &eps, params)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pairing {
    /// Row `i` of `z` is compared with row `i` of `z'`.
    #[default]
    Direct,
    /// Every latent dimension of both batches is sorted before comparison.
    Sorted,
}

/// Which teacher quantity the student is distilled towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TeacherTarget {
    /// Reparameterized teacher samples.
    #[default]
    Sample,
    /// The teacher's posterior means.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistillLoss {
    pub distillation: f64,
    pub kl: f64,
    pub total: f64,
}

/// For every column, the row permutation that sorts it ascending.
fn column_orders(m: &Matrix) -> Vec<Vec<usize>> {
    (0..m.cols())
        .map(|c| {
            let mut idx: Vec<usize> = (0..m.rows()).collect();
            idx.sort_by(|&a, &b| m.get(a, c).total_cmp(&m.get(b, c)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Visits `(row in z, row in z', column)` triples under the pairing.
fn for_each_pair(z: &Matrix, z_student: &Matrix, pairing: Pairing, mut f: impl FnMut(usize, usize, usize)) {
    let (b, k) = z.shape();
    match pairing {
        Pairing::Sorted if b > 1 => {
            let oz = column_orders(z);
            let os = column_orders(z_student);
            for c in 0..k {
                for r in 0..b {
                    f(oz[c][r], os[c][r], c);
                }
            }
        }
        _ => {
            for r in 0..b {
                for c in 0..k {
                    f(r, r, c);
                }
            }
        }
    }
}

/// Distillation objective and its components. With one row, `Sorted`
/// pairing is the same as `Direct`.
pub fn distill_loss(z: &Matrix, z_student: &Matrix, student: &GaussianLatent, pairing: Pairing) -> Result<DistillLoss> {
    z.check_same_shape(z_student, "distill_loss")?;
    student.mu.check_same_shape(z_student, "distill_loss (student latent)")?;
    let b = z.rows();
    if b == 0 {
        return Err(Error::EmptyInput);
    }
    let mut l1 = 0.0;
    for_each_pair(z, z_student, pairing, |i, j, c| l1 += (z.get(i, c) - z_student.get(j, c)).abs());
    let distillation = l1 / b as f64;
    let kl = gaussian_kl(&student.mu, &student.logvar)? / b as f64;
    Ok(DistillLoss { distillation, kl, total: distillation + kl })
}

/// Gradient of the distillation term wrt `z'`.
fn distill_grad(z: &Matrix, z_student: &Matrix, pairing: Pairing) -> Matrix {
    let scale = 1.0 / z.rows() as f64;
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for_each_pair(z, z_student, pairing, |i, j, c| {
        let d = z_student.get(j, c) - z.get(i, c);
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        g.set(j, c, g.get(j, c) + scale * sign);
    });
    g
}

/// One student update's forward and backward pass; gradients are accumulated
/// into `params`.
pub fn student_loss_and_gradients(
    params: &mut StudentParams,
    z: &Matrix,
    noise: &Matrix,
    eps: &Matrix,
    pairing: Pairing,
) -> Result<DistillLoss> {
    let pre = params.hidden.forward(noise)?;
    let h = relu(&pre);
    let out = params.out.forward(&h)?;
    let k = params.latent_dim;
    let lat = GaussianLatent { mu: out.columns(0, k), logvar: out.columns(k, k) };
    let z_student = reparameterize(&lat, eps)?;
    let loss = distill_loss(z, &z_student, &lat, pairing)?;
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("distillation loss".into()));
    }
    let b = z.rows();
    let dz = distill_grad(z, &z_student, pairing);
    let (kl_mu, kl_lv) = gaussian_kl_backward(&lat.mu, &lat.logvar, 1.0 / b as f64);
    let mut d_out = Matrix::zeros(b, 2 * k);
    for r in 0..b {
        let row = d_out.row_mut(r);
        for c in 0..k {
            let g = dz.get(r, c);
            row[c] = g + kl_mu.get(r, c);
            row[k + c] = g * eps.get(r, c) * 0.5 * math::exp(0.5 * lat.logvar.get(r, c)) + kl_lv.get(r, c);
        }
    }
    let d_h = params.out.backward(&h, &d_out)?;
    let d_pre = relu_backward(&pre, &d_h);
    params.hidden.backward_params(noise, &d_pre)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DistillConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub pairing: Pairing,
    pub target: TeacherTarget,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            epochs: 5000,
            batch_size: 2048,
            adam: AdamConfig::with_learning_rate(1e-5),
            pairing: Pairing::Direct,
            target: TeacherTarget::Sample,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudentEpoch {
    pub epoch: usize,
    pub distillation: f64,
    pub kl: f64,
    pub total: f64,
}

/// Distills `teacher` into a fresh student.
///
/// Targets are the teacher's latents for the rows of `ds`; the teacher is
/// frozen, so its posteriors are computed once up front.
pub fn train_student(
    teacher: &TeacherParams,
    ds: &EncodedDataset,
    cfg: &DistillConfig,
) -> Result<(StudentParams, Vec<StudentEpoch>)> {
    train_student_with(teacher, ds, cfg, |_| {})
}

pub fn train_student_with(
    teacher: &TeacherParams,
    ds: &EncodedDataset,
    cfg: &DistillConfig,
    on_epoch: impl FnMut(&StudentEpoch),
) -> Result<(StudentParams, Vec<StudentEpoch>)> {
    if STUDENT_HIDDEN_DIM >= teacher.hidden_dim {
        return Err(Error::IncompatibleModels(format!(
            "student hidden width {STUDENT_HIDDEN_DIM} must be below the teacher's {}",
            teacher.hidden_dim
        )));
    }
    let latents = encode_dataset(ds, teacher)?;
    train_student_on_latents(&latents, cfg, on_epoch)
}

/// Distillation against precomputed teacher posteriors, one per data row.
pub fn train_student_on_latents(
    teacher_latents: &GaussianLatent,
    cfg: &DistillConfig,
    mut on_epoch: impl FnMut(&StudentEpoch),
) -> Result<(StudentParams, Vec<StudentEpoch>)> {
    cfg.validate()?;
    let n = teacher_latents.rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let k = teacher_latents.mu.cols();
    let mut params = StudentParams::init(k, cfg.seed);
    let mut target_rng = rng_for(cfg.seed, 3);
    let mut noise_rng = rng_for(cfg.seed, 4);
    let mut eps_rng = rng_for(cfg.seed, 5);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = batch_indices(n, cfg.batch_size, epoch_shuffle_seed(cfg.seed ^ 0x5eed_d157, epoch));
        let mut sum = DistillLoss::default();
        for (bi, idx) in batches.iter().enumerate() {
            let diverged = |e: Error| Error::Diverged(format!("student epoch {} batch {}: {e}", epoch + 1, bi + 1));
            let z = teacher_targets(teacher_latents, idx, cfg.target, &mut target_rng).map_err(diverged)?;
            let b = idx.len();
            let mut noise = Matrix::zeros(b, NOISE_DIM);
            fill_standard_normal(&mut noise, &mut noise_rng);
            let mut eps = Matrix::zeros(b, k);
            fill_standard_normal(&mut eps, &mut eps_rng);
            params.zero_grad();
            let loss = student_loss_and_gradients(&mut params, &z, &noise, &eps, cfg.pairing).map_err(diverged)?;
            adam_step(&mut params.tensors_mut(), &cfg.adam).map_err(diverged)?;
            sum.distillation += loss.distillation;
            sum.kl += loss.kl;
            sum.total += loss.total;
        }
        let nb = batches.len() as f64;
        let rec = StudentEpoch {
            epoch: epoch + 1,
            distillation: sum.distillation / nb,
            kl: sum.kl / nb,
            total: sum.total / nb,
        };
        on_epoch(&rec);
        trace.push(rec);
    }
    Ok((params, trace))
}

fn teacher_targets(latents: &GaussianLatent, idx: &[usize], target: TeacherTarget, rng: &mut Rng) -> Result<Matrix> {
    let lat = latents.select_rows(idx);
    match target {
        TeacherTarget::Mean => Ok(lat.mu),
        TeacherTarget::Sample => {
            let mut eps = Matrix::zeros(idx.len(), lat.mu.cols());
            fill_standard_normal(&mut eps, rng);
            reparameterize(&lat, &eps)
        }
    }
}
