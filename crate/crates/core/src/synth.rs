//! Stage three: synthetic records from noise.
//!
//! Each record is produced as `noise -> student -> z' -> decoder(z', s)`,
//! where `s` is drawn from the training marginal of the sensitive attribute
//! or fixed to one level. The decoder's target head supplies the label.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::distill::{student_forward, StudentParams};
use crate::encoding::{decode_records, onehot, EncodingState};
use crate::error::{Error, Result};
use crate::fairvae::{decode, heads_for, Head, TeacherParams};
use crate::numkernel::{fill_standard_normal, math, rng_for, Matrix, Rng};
use crate::schema::{FeatureSchema, RawTable};

/// Records are generated in chunks of this size, each with its own sub-seed.
pub const CHUNK_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "level", rename_all = "lowercase"))]
pub enum SensitiveStrategy {
    /// Draw from the sensitive attribute's marginal in the training data.
    #[default]
    Empirical,
    /// Use this level for every record.
    Fixed(String),
}

/// Sensitive levels for `n` records.
pub fn sample_sensitive(
    strategy: &SensitiveStrategy,
    n: usize,
    schema: &FeatureSchema,
    state: &EncodingState,
    seed: u64,
) -> Result<Vec<usize>> {
    match strategy {
        SensitiveStrategy::Fixed(level) => {
            let idx = schema.sensitive_levels().iter().position(|l| l == level).ok_or_else(|| {
                Error::UnknownLevel { row: 0, column: schema.sensitive.clone(), value: level.clone() }
            })?;
            Ok(alloc::vec![idx; n])
        }
        SensitiveStrategy::Empirical => {
            let counts = &state.sensitive_counts;
            let total: usize = counts.iter().sum();
            if total == 0 {
                return Err(Error::InvalidArgument("no sensitive-attribute counts recorded".into()));
            }
            let mut rng = rng_for(seed, 6);
            Ok((0..n)
                .map(|_| {
                    let mut u = rng.random_range(0..total);
                    counts
                        .iter()
                        .position(|&c| {
                            if u < c {
                                true
                            } else {
                                u -= c;
                                false
                            }
                        })
                        .expect("u < total")
                })
                .collect())
        }
    }
}

/// How decoder outputs become record values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Decoding {
    /// Most likely value: argmax level, predicted mean.
    Mode,
    /// A full draw from the decoder's likelihood: a level from the softmax,
    /// a numeric value from the unit-variance Gaussian around the mean.
    Sample,
    /// Levels drawn from the softmax, numeric values at the predicted mean.
    #[default]
    SampleLevels,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub teacher: Option<String>,
    pub student: Option<String>,
    pub seed: u64,
    pub n_samples: usize,
    pub s_strategy: SensitiveStrategy,
    #[cfg_attr(feature = "serde", serde(default))]
    pub decoding: Decoding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub table: RawTable,
    pub provenance: Provenance,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Checks that the student feeds the teacher's decoder and that the decoder
/// matches the encoding.
pub fn check_compatible(student: &StudentParams, teacher: &TeacherParams, state: &EncodingState) -> Result<()> {
    if student.latent_dim != teacher.latent_dim {
        return Err(Error::IncompatibleModels(alloc::format!(
            "student latent dimension {} differs from the teacher's {}",
            student.latent_dim,
            teacher.latent_dim
        )));
    }
    if teacher.heads != heads_for(state) || teacher.n_sensitive != state.sensitive_levels {
        return Err(Error::IncompatibleModels("teacher was trained on a different encoding".into()));
    }
    Ok(())
}

/// Decoder outputs and sensitive levels for one chunk of records.
///
/// Chunk `c` depends only on `(seed, c)`, so chunks may be computed in any
/// order or concurrently.
pub fn generate_chunk(
    student: &StudentParams,
    teacher: &TeacherParams,
    sensitive: &[usize],
    seed: u64,
    chunk: usize,
    decoding: Decoding,
) -> Result<Matrix> {
    let n = sensitive.len();
    let sub = chunk_seed(seed, chunk);
    let mut noise = Matrix::zeros(n, student.noise_dim);
    fill_standard_normal(&mut noise, &mut rng_for(sub, 7));
    let mut eps = Matrix::zeros(n, student.latent_dim);
    fill_standard_normal(&mut eps, &mut rng_for(sub, 8));
    let (_, z) = student_forward(&noise, &eps, student)?;
    let s1h = onehot(sensitive.iter().copied(), teacher.n_sensitive);
    let mut out = decode(&z, &s1h, teacher)?;
    out.ensure_finite("decoder output")?;
    if decoding != Decoding::Mode {
        sample_likelihood(&mut out, &teacher.heads, decoding == Decoding::Sample, &mut rng_for(sub, 12));
    }
    Ok(out)
}

/// Replaces each categorical group with a one-hot draw from its softmax and,
/// if asked, adds unit Gaussian noise to each numeric mean.
fn sample_likelihood(out: &mut Matrix, heads: &[Head], numeric_noise: bool, rng: &mut Rng) {
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for h in heads {
            match *h {
                Head::Categorical { offset, width } => {
                    let g = &mut row[offset..offset + width];
                    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let total: f64 = g.iter().map(|&l| math::exp(l - max)).sum();
                    let mut u: f64 = rng.random::<f64>() * total;
                    let mut pick = width - 1;
                    for (i, &l) in g.iter().enumerate() {
                        u -= math::exp(l - max);
                        if u < 0.0 {
                            pick = i;
                            break;
                        }
                    }
                    g.iter_mut().enumerate().for_each(|(i, v)| *v = if i == pick { 1.0 } else { 0.0 });
                }
                Head::Numeric { offset } if numeric_noise => {
                    let e: f64 = StandardNormal.sample(rng);
                    row[offset] += e;
                }
                Head::Numeric { .. } => {}
            }
        }
    }
}

fn chunk_seed(seed: u64, chunk: usize) -> u64 {
    let mut z = seed.wrapping_add((chunk as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `n_samples` records with the default [`Decoding`]; a pure
/// function of its arguments.
pub fn generate(
    student: &StudentParams,
    teacher: &TeacherParams,
    schema: &FeatureSchema,
    state: &EncodingState,
    n_samples: usize,
    seed: u64,
    strategy: &SensitiveStrategy,
) -> Result<SyntheticDataset> {
    generate_with(student, teacher, schema, state, n_samples, seed, strategy, Decoding::default())
}

#[allow(clippy::too_many_arguments)]
pub fn generate_with(
    student: &StudentParams,
    teacher: &TeacherParams,
    schema: &FeatureSchema,
    state: &EncodingState,
    n_samples: usize,
    seed: u64,
    strategy: &SensitiveStrategy,
    decoding: Decoding,
) -> Result<SyntheticDataset> {
    check_compatible(student, teacher, state)?;
    let sensitive = sample_sensitive(strategy, n_samples, schema, state, seed)?;
    let mut rows = Vec::with_capacity(n_samples);
    for (c, s) in sensitive.chunks(CHUNK_SIZE).enumerate() {
        let out = generate_chunk(student, teacher, s, seed, c, decoding)?;
        rows.extend(decode_records(&out, s, schema, state)?.rows);
    }
    Ok(SyntheticDataset {
        table: RawTable { rows },
        provenance: Provenance {
            teacher: None,
            student: None,
            seed,
            n_samples,
            s_strategy: strategy.clone(),
            decoding,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, encode_with_state};
    use crate::schema::tests::toy_schema;
    use crate::schema::RawValue;
    use alloc::vec;

    fn toy() -> (FeatureSchema, EncodingState) {
        let schema = toy_schema();
        let rows = (0..40)
            .map(|i| {
                vec![
                    RawValue::Number(20.0 + (i * 7 % 13) as f64),
                    RawValue::Level(i % 3),
                    RawValue::Level(usize::from(i % 10 < 7)),
                    RawValue::Level((i / 3) % 2),
                ]
            })
            .collect();
        let ds = encode(&RawTable { rows }, &schema).unwrap();
        (schema, ds.state)
    }

    #[test]
    fn fixed_strategy() {
        let (schema, state) = toy();
        let s = sample_sensitive(&SensitiveStrategy::Fixed("Female".into()), 5, &schema, &state, 1).unwrap();
        assert_eq!(s, vec![0; 5]);
        assert!(sample_sensitive(&SensitiveStrategy::Fixed("Other".into()), 5, &schema, &state, 1).is_err());
    }

    #[test]
    fn empirical_strategy_follows_marginal() {
        let (schema, mut state) = toy();
        state.sensitive_counts = vec![70, 30];
        let s = sample_sensitive(&SensitiveStrategy::Empirical, 100_000, &schema, &state, 3).unwrap();
        let p0 = s.iter().filter(|&&v| v == 0).count() as f64 / 1e5;
        assert!((p0 - 0.7).abs() < 0.01, "{p0}");
        state.sensitive_counts = vec![0, 12];
        let s = sample_sensitive(&SensitiveStrategy::Empirical, 50, &schema, &state, 3).unwrap();
        assert!(s.iter().all(|&v| v == 1));
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let (schema, state) = toy();
        let teacher = TeacherParams::init(&state, 8, 64, 1);
        let student = StudentParams::init(8, 2);
        let strat = SensitiveStrategy::Empirical;
        let empty = generate(&student, &teacher, &schema, &state, 0, 5, &strat).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.provenance.n_samples, 0);

        let a = generate(&student, &teacher, &schema, &state, 5000, 5, &strat).unwrap();
        let b = generate(&student, &teacher, &schema, &state, 5000, 5, &strat).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
        encode_with_state(&a.table, &schema, &state).unwrap();
        for row in &a.table.rows {
            assert!(row[1].level().unwrap() < 3);
            assert!(row[3].level().unwrap() < 2);
        }
    }

    #[test]
    fn mismatched_latent_dim_is_rejected() {
        let (schema, state) = toy();
        let teacher = TeacherParams::init(&state, 8, 64, 1);
        let student = StudentParams::init(4, 2);
        let err = generate(&student, &teacher, &schema, &state, 3, 0, &SensitiveStrategy::Empirical).unwrap_err();
        assert!(matches!(err, Error::IncompatibleModels(_)));
    }
}
