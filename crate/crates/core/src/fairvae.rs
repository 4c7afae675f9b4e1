//! Stage one: the fair teacher, a conditional VAE.
//!
//! The encoder maps `[x | onehot(y) | onehot(s)]` to a diagonal Gaussian over
//! a `k`-dimensional latent; the decoder reconstructs `[x | onehot(y)]` from
//! `[z | onehot(s)]`. Training minimizes
//!
//! ```text
//! KL(q(z | x, s) || N(0, I)) + NLL(x | z, s) + beta * V²(z, s)
//! ```
//!
//! where the first two terms are averaged over the batch and `V²` is the
//! empirical squared distance covariance between the sampled latents and the
//! sensitive one-hot codes ([`crate::dcov`]). Subtracting the reconstruction
//! log-likelihood is the same as adding the negative log-likelihood, which is
//! what [`reconstruction_loss`] returns.

use alloc::format;
use alloc::vec::Vec;

use crate::dcov::dcov2_empirical;
use crate::encoding::{batch_indices, EncodedDataset, EncodingState, SlotKind};
use crate::error::{Error, Result};
use crate::numkernel::{
    adam_step, fill_standard_normal, gaussian_kl, gaussian_kl_backward, math, relu, relu_backward, rng_for, AdamConfig,
    Linear, Matrix, ParamTensor,
};

pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_HIDDEN_DIM: usize = 64;

/// Diagonal Gaussian parameters for a batch of latent codes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mu: Matrix,
    pub logvar: Matrix,
}

impl GaussianLatent {
    fn from_joint(out: &Matrix, k: usize) -> Self {
        GaussianLatent { mu: out.columns(0, k), logvar: out.columns(k, k) }
    }

    pub fn rows(&self) -> usize {
        self.mu.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        GaussianLatent { mu: self.mu.select_rows(idx), logvar: self.logvar.select_rows(idx) }
    }
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize(lat: &GaussianLatent, eps: &Matrix) -> Result<Matrix> {
    lat.mu.check_same_shape(&lat.logvar, "reparameterize")?;
    lat.mu.check_same_shape(eps, "reparameterize")?;
    let data = lat
        .mu
        .as_slice()
        .iter()
        .zip(lat.logvar.as_slice())
        .zip(eps.as_slice())
        .map(|((&m, &lv), &e)| m + math::exp(0.5 * lv) * e)
        .collect();
    Matrix::from_vec(eps.rows(), eps.cols(), data)
}

/// Output head of the decoder for one reconstructed column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Logits of a categorical column.
    Categorical { offset: usize, width: usize },
    /// Mean of a unit-variance Gaussian over a standardized numeric column.
    Numeric { offset: usize },
}

pub fn heads_for(state: &EncodingState) -> Vec<Head> {
    state
        .output_slots()
        .iter()
        .map(|slot| match slot.kind {
            SlotKind::Categorical { levels } => Head::Categorical { offset: slot.offset, width: levels },
            SlotKind::Numeric { .. } => Head::Numeric { offset: slot.offset },
        })
        .collect()
}

fn heads_width(heads: &[Head]) -> usize {
    heads
        .iter()
        .map(|h| match *h {
            Head::Categorical { offset, width } => offset + width,
            Head::Numeric { offset } => offset + 1,
        })
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherParams {
    pub enc_hidden: Linear,
    pub enc_out: Linear,
    pub dec_hidden: Linear,
    pub dec_out: Linear,
    pub heads: Vec<Head>,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub n_sensitive: usize,
}

impl TeacherParams {
    /// Randomly initialized teacher for data encoded with `state`.
    pub fn init(state: &EncodingState, latent_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let heads = heads_for(state);
        let out_w = state.output_width();
        let ns = state.sensitive_levels;
        let mut rng = rng_for(seed, 1);
        TeacherParams {
            enc_hidden: Linear::init(out_w + ns, hidden_dim, &mut rng),
            enc_out: Linear::init(hidden_dim, 2 * latent_dim, &mut rng),
            dec_hidden: Linear::init(latent_dim + ns, hidden_dim, &mut rng),
            dec_out: Linear::init(hidden_dim, out_w, &mut rng),
            heads,
            latent_dim,
            hidden_dim,
            n_sensitive: ns,
        }
    }

    /// Reassembles a teacher from its four layers, checking that the shapes
    /// chain together.
    pub fn from_layers(layers: [Linear; 4], heads: Vec<Head>, n_sensitive: usize) -> Result<Self> {
        let [enc_hidden, enc_out, dec_hidden, dec_out] = layers;
        let h = enc_hidden.output_dim();
        let k2 = enc_out.output_dim();
        let out_w = heads_width(&heads);
        let ok = k2 % 2 == 0
            && enc_out.input_dim() == h
            && enc_hidden.input_dim() == out_w + n_sensitive
            && dec_hidden.input_dim() == k2 / 2 + n_sensitive
            && dec_hidden.output_dim() == h
            && dec_out.input_dim() == h
            && dec_out.output_dim() == out_w;
        if !ok {
            return Err(Error::InvalidArgument("teacher layer shapes do not chain".into()));
        }
        Ok(TeacherParams { enc_hidden, enc_out, dec_hidden, dec_out, heads, latent_dim: k2 / 2, hidden_dim: h, n_sensitive })
    }

    pub fn layers(&self) -> [(&'static str, &Linear); 4] {
        [
            ("encoder.hidden", &self.enc_hidden),
            ("encoder.out", &self.enc_out),
            ("decoder.hidden", &self.dec_hidden),
            ("decoder.out", &self.dec_out),
        ]
    }

    pub fn output_width(&self) -> usize {
        self.dec_out.output_dim()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.enc_hidden.param_count() + self.enc_out.param_count()
    }

    fn params_mut(&mut self) -> [&mut ParamTensor; 8] {
        [
            &mut self.enc_hidden.weight,
            &mut self.enc_hidden.bias,
            &mut self.enc_out.weight,
            &mut self.enc_out.bias,
            &mut self.dec_hidden.weight,
            &mut self.dec_hidden.bias,
            &mut self.dec_out.weight,
            &mut self.dec_out.bias,
        ]
    }

    /// Mutable view of every learnable tensor, in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.params_mut().into_iter().collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Encoder pass. `x` is the `[x | onehot(y)]` reconstruction layout.
pub fn encode(x: &Matrix, s_onehot: &Matrix, params: &TeacherParams) -> Result<GaussianLatent> {
    let inp = Matrix::hcat(&[x, s_onehot])?;
    let h = relu(&params.enc_hidden.forward(&inp)?);
    let out = params.enc_out.forward(&h)?;
    Ok(GaussianLatent::from_joint(&out, params.latent_dim))
}

/// Decoder pass: raw head outputs in the `[x | onehot(y)]` layout (logits for
/// categorical groups, standardized means for numerics).
pub fn decode(z: &Matrix, s_onehot: &Matrix, params: &TeacherParams) -> Result<Matrix> {
    if z.cols() != params.latent_dim {
        return Err(Error::dim("decode", z.shape(), (z.rows(), params.latent_dim)));
    }
    let inp = Matrix::hcat(&[z, s_onehot])?;
    let h = relu(&params.dec_hidden.forward(&inp)?);
    params.dec_out.forward(&h)
}

fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|&l| math::exp(l - max)).sum::<f64>());
    logits[target] - lse
}

/// Negative log-likelihood summed over rows: softmax cross-entropy per
/// categorical head plus `½ (x - x̂)²` per numeric head.
pub fn reconstruction_loss(outputs: &Matrix, target: &Matrix, heads: &[Head]) -> Result<f64> {
    outputs.check_same_shape(target, "reconstruction_loss")?;
    if outputs.cols() < heads_width(heads) {
        return Err(Error::dim("reconstruction_loss (heads)", outputs.shape(), (outputs.rows(), heads_width(heads))));
    }
    let mut total = 0.0;
    for r in 0..outputs.rows() {
        let o = outputs.row(r);
        let t = target.row(r);
        for head in heads {
            match *head {
                Head::Categorical { offset, width } => {
                    let truth = crate::encoding::argmax(&t[offset..offset + width]);
                    total -= log_softmax_at(&o[offset..offset + width], truth);
                }
                Head::Numeric { offset } => {
                    let d = o[offset] - t[offset];
                    total += 0.5 * d * d;
                }
            }
        }
    }
    Ok(total)
}

/// Gradient of `scale * reconstruction_loss` wrt the outputs.
fn reconstruction_grad(outputs: &Matrix, target: &Matrix, heads: &[Head], scale: f64) -> Matrix {
    let mut g = Matrix::zeros(outputs.rows(), outputs.cols());
    for r in 0..outputs.rows() {
        let o = outputs.row(r);
        let t = target.row(r);
        let gr = g.row_mut(r);
        for head in heads {
            match *head {
                Head::Categorical { offset, width } => {
                    let logits = &o[offset..offset + width];
                    let truth = crate::encoding::argmax(&t[offset..offset + width]);
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = logits.iter().map(|&l| math::exp(l - max)).sum();
                    for i in 0..width {
                        let p = math::exp(logits[i] - max) / z;
                        gr[offset + i] = scale * (p - if i == truth { 1.0 } else { 0.0 });
                    }
                }
                Head::Numeric { offset } => gr[offset] = scale * (o[offset] - t[offset]),
            }
        }
    }
    g
}

/// Batch-averaged loss components. `total = kl + nll + beta * dcov2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TeacherLoss {
    pub kl: f64,
    pub nll: f64,
    pub dcov2: f64,
    pub total: f64,
}

/// Forward and backward pass on one batch with fixed reparameterization noise.
///
/// Parameter gradients are accumulated into `params`; call
/// [`TeacherParams::zero_grad`] first. Batches with fewer than four rows skip
/// the distance covariance term.
pub fn loss_and_gradients(
    params: &mut TeacherParams,
    x: &Matrix,
    s_onehot: &Matrix,
    eps: &Matrix,
    beta: f64,
) -> Result<TeacherLoss> {
    let b = x.rows();
    if b == 0 {
        return Err(Error::EmptyInput);
    }
    let scale = 1.0 / b as f64;
    let k = params.latent_dim;

    let enc_in = Matrix::hcat(&[x, s_onehot])?;
    let pre1 = params.enc_hidden.forward(&enc_in)?;
    let h1 = relu(&pre1);
    let enc_out = params.enc_out.forward(&h1)?;
    let lat = GaussianLatent::from_joint(&enc_out, k);
    let z = reparameterize(&lat, eps)?;
    let dec_in = Matrix::hcat(&[&z, s_onehot])?;
    let pre2 = params.dec_hidden.forward(&dec_in)?;
    let h2 = relu(&pre2);
    let out = params.dec_out.forward(&h2)?;

    let kl = gaussian_kl(&lat.mu, &lat.logvar)? * scale;
    let nll = reconstruction_loss(&out, x, &params.heads)? * scale;
    let (dcov2, dcov_grad) = if b >= 4 && beta > 0.0 {
        dcov2_empirical(&z, s_onehot)?
    } else if b >= 4 {
        (dcov2_empirical(&z, s_onehot)?.0, Matrix::zeros(b, k))
    } else {
        (0.0, Matrix::zeros(b, k))
    };
    let total = kl + nll + beta * dcov2;
    if !total.is_finite() {
        return Err(Error::NonFinite("teacher loss".into()));
    }

    let d_out = reconstruction_grad(&out, x, &params.heads, scale);
    let d_h2 = params.dec_out.backward(&h2, &d_out)?;
    let d_pre2 = relu_backward(&pre2, &d_h2);
    let d_dec_in = params.dec_hidden.backward(&dec_in, &d_pre2)?;

    let (kl_mu, kl_lv) = gaussian_kl_backward(&lat.mu, &lat.logvar, scale);
    let mut d_enc_out = Matrix::zeros(b, 2 * k);
    for r in 0..b {
        let dz_rec = &d_dec_in.row(r)[..k];
        let dz_pen = dcov_grad.row(r);
        let lv = lat.logvar.row(r);
        let e = eps.row(r);
        let row = d_enc_out.row_mut(r);
        for c in 0..k {
            let dz = dz_rec[c] + beta * dz_pen[c];
            row[c] = dz + kl_mu.get(r, c);
            row[k + c] = dz * e[c] * 0.5 * math::exp(0.5 * lv[c]) + kl_lv.get(r, c);
        }
    }
    let d_h1 = params.enc_out.backward(&h1, &d_enc_out)?;
    let d_pre1 = relu_backward(&pre1, &d_h1);
    params.enc_hidden.backward_params(&enc_in, &d_pre1)?;

    Ok(TeacherLoss { kl, nll, dcov2, total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TeacherTrainConfig {
    /// Distance covariance penalty weight, an integer in `0..=9`.
    pub beta: u8,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        TeacherTrainConfig {
            beta: 9,
            epochs: 200,
            batch_size: 2048,
            adam: AdamConfig::with_learning_rate(1e-3),
            seed: 0,
            latent_dim: DEFAULT_LATENT_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

impl TeacherTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta > 9 {
            return Err(Error::InvalidArgument(format!("beta must be in 0..=9, got {}", self.beta)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("epochs, batch size and layer widths must be positive".into()));
        }
        self.adam.validate()
    }
}

/// Mean loss components over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TeacherEpoch {
    pub epoch: usize,
    pub kl: f64,
    pub nll: f64,
    pub dcov2: f64,
    pub total: f64,
}

pub(crate) fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer over (seed, epoch)
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains a teacher with Adam, one update per mini-batch.
pub fn train_teacher(ds: &EncodedDataset, cfg: &TeacherTrainConfig) -> Result<(TeacherParams, Vec<TeacherEpoch>)> {
    train_teacher_with(ds, cfg, |_| {})
}

/// [`train_teacher`] with a callback invoked after every epoch.
pub fn train_teacher_with(
    ds: &EncodedDataset,
    cfg: &TeacherTrainConfig,
    mut on_epoch: impl FnMut(&TeacherEpoch),
) -> Result<(TeacherParams, Vec<TeacherEpoch>)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut params = TeacherParams::init(&ds.state, cfg.latent_dim, cfg.hidden_dim, cfg.seed);
    let xt = ds.teacher_input();
    let beta = cfg.beta as f64;
    let mut eps_rng = rng_for(cfg.seed, 2);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = batch_indices(ds.len(), cfg.batch_size, epoch_shuffle_seed(cfg.seed, epoch));
        let mut sum = TeacherLoss::default();
        for (bi, idx) in batches.iter().enumerate() {
            let x = xt.select_rows(idx);
            let s = ds.s_onehot.select_rows(idx);
            let mut eps = Matrix::zeros(idx.len(), cfg.latent_dim);
            fill_standard_normal(&mut eps, &mut eps_rng);
            params.zero_grad();
            let diverged = |e: Error| Error::Diverged(format!("teacher epoch {} batch {}: {e}", epoch + 1, bi + 1));
            let loss = loss_and_gradients(&mut params, &x, &s, &eps, beta).map_err(diverged)?;
            adam_step(&mut params.tensors_mut(), &cfg.adam).map_err(diverged)?;
            sum.kl += loss.kl;
            sum.nll += loss.nll;
            sum.dcov2 += loss.dcov2;
            sum.total += loss.total;
        }
        let nb = batches.len() as f64;
        let rec = TeacherEpoch {
            epoch: epoch + 1,
            kl: sum.kl / nb,
            nll: sum.nll / nb,
            dcov2: sum.dcov2 / nb,
            total: sum.total / nb,
        };
        on_epoch(&rec);
        trace.push(rec);
    }
    Ok((params, trace))
}

/// Latent parameters for every row of `ds`, in chunks to bound memory.
pub fn encode_dataset(ds: &EncodedDataset, params: &TeacherParams) -> Result<GaussianLatent> {
    let xt = ds.teacher_input();
    let n = ds.len();
    let k = params.latent_dim;
    let mut mu = Matrix::zeros(n, k);
    let mut logvar = Matrix::zeros(n, k);
    let chunk = 4096;
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let lat = encode(&xt.select_rows(&idx), &ds.s_onehot.select_rows(&idx), params)?;
        for (j, &r) in idx.iter().enumerate() {
            mu.row_mut(r).copy_from_slice(lat.mu.row(j));
            logvar.row_mut(r).copy_from_slice(lat.logvar.row(j));
        }
        start += chunk;
    }
    mu.ensure_finite("teacher latent mean")?;
    logvar.ensure_finite("teacher latent log-variance")?;
    Ok(GaussianLatent { mu, logvar })
}
