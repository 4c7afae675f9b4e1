//! Schema-driven numeric encoding of raw tables, train/test splitting and
//! mini-batching.
//!
//! Categorical features become one-hot groups, numeric features are z-scored.
//! The sensitive attribute and the target never enter `x`; they are kept as
//! separate vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkernel::{math, rng_for, Matrix};
use crate::schema::{ColumnKind, FeatureSchema, RawTable, RawValue};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum SlotKind {
    Categorical { levels: usize },
    Numeric { mean: f64, std: f64 },
}

/// Observed range of a numeric column, used to map decoded values back into
/// the column's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NumericDomain {
    pub min: f64,
    pub max: f64,
    /// Every fitted value was a whole number.
    pub integer: bool,
}

impl NumericDomain {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let integer = values.iter().all(|&v| libm::round(v) == v);
        NumericDomain { min, max, integer }
    }

    /// Clamps into `[min, max]`, rounding first for integer columns.
    pub fn project(&self, v: f64) -> f64 {
        let v = if self.integer { libm::round(v) } else { v };
        v.clamp(self.min, self.max)
    }
}

/// Where one schema column lives inside an encoded row.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSlot {
    /// Index into `FeatureSchema::columns`.
    pub column: usize,
    pub offset: usize,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: SlotKind,
    /// Set for numeric columns.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub domain: Option<NumericDomain>,
}

impl FeatureSlot {
    pub fn width(&self) -> usize {
        match self.kind {
            SlotKind::Categorical { levels } => levels,
            SlotKind::Numeric { .. } => 1,
        }
    }
}

/// Everything needed to encode further tables the same way, and to invert
/// the encoding.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncodingState {
    /// Feature columns of `x`, in schema order.
    pub slots: Vec<FeatureSlot>,
    pub sensitive_column: usize,
    pub target_column: usize,
    pub sensitive_levels: usize,
    /// Per-level counts of the sensitive attribute in the data the statistics
    /// were fitted on.
    pub sensitive_counts: Vec<usize>,
}

impl EncodingState {
    pub fn x_width(&self) -> usize {
        self.slots.iter().map(FeatureSlot::width).sum()
    }

    /// Slots of the reconstruction layout `[x | onehot(y)]`: the features
    /// followed by the binary target group.
    pub fn output_slots(&self) -> Vec<FeatureSlot> {
        let mut slots = self.slots.clone();
        slots.push(FeatureSlot {
            column: self.target_column,
            offset: self.x_width(),
            kind: SlotKind::Categorical { levels: 2 },
            domain: None,
        });
        slots
    }

    pub fn output_width(&self) -> usize {
        self.x_width() + 2
    }

    /// Maps every column of `[x | onehot(s)]` back to its schema column.
    pub fn forest_feature_columns(&self) -> Vec<usize> {
        let mut cols = Vec::with_capacity(self.x_width() + self.sensitive_levels);
        for slot in &self.slots {
            cols.extend(core::iter::repeat_n(slot.column, slot.width()));
        }
        cols.extend(core::iter::repeat_n(self.sensitive_column, self.sensitive_levels));
        cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub x: Matrix,
    pub s: Vec<usize>,
    pub s_onehot: Matrix,
    pub y: Vec<u8>,
    pub state: EncodingState,
    /// Row index of each encoded row in the table it was encoded from.
    pub source_rows: Vec<usize>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y_onehot(&self) -> Matrix {
        onehot(self.y.iter().map(|&v| v as usize), 2)
    }

    /// `[x | onehot(y)]`, the teacher's reconstruction target.
    pub fn teacher_input(&self) -> Matrix {
        Matrix::hcat(&[&self.x, &self.y_onehot()]).expect("row counts agree")
    }

    /// `[x | onehot(s)]`, the downstream classifier's features.
    pub fn forest_input(&self) -> Matrix {
        Matrix::hcat(&[&self.x, &self.s_onehot]).expect("row counts agree")
    }

    /// Subset of rows, keeping the encoding state.
    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            x: self.x.select_rows(indices),
            s: indices.iter().map(|&i| self.s[i]).collect(),
            s_onehot: self.s_onehot.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            state: self.state.clone(),
            source_rows: indices.iter().map(|&i| self.source_rows[i]).collect(),
        }
    }

    pub fn sensitive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.state.sensitive_levels];
        for &s in &self.s {
            counts[s] += 1;
        }
        counts
    }
}

pub fn onehot(indices: impl ExactSizeIterator<Item = usize>, width: usize) -> Matrix {
    let mut m = Matrix::zeros(indices.len(), width);
    for (r, i) in indices.enumerate() {
        m.set(r, i, 1.0);
    }
    m
}

/// Encodes `table`, fitting standardization statistics on the table itself.
pub fn encode(table: &RawTable, schema: &FeatureSchema) -> Result<EncodedDataset> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut slots = Vec::new();
    let mut offset = 0;
    for ci in schema.feature_indices() {
        let (kind, domain) = match &schema.columns[ci].kind {
            ColumnKind::Categorical { levels } => (SlotKind::Categorical { levels: levels.len() }, None),
            ColumnKind::Numeric => {
                let values: Vec<f64> = table.rows.iter().map(|r| r[ci].number().unwrap_or(0.0)).collect();
                let (mean, std) = mean_std(&values);
                if !(std > 0.0) {
                    return Err(Error::ZeroVariance(schema.columns[ci].name.clone()));
                }
                (SlotKind::Numeric { mean, std }, Some(NumericDomain::fit(&values)))
            }
        };
        let slot = FeatureSlot { column: ci, offset, kind, domain };
        offset += slot.width();
        slots.push(slot);
    }
    let state = EncodingState {
        slots,
        sensitive_column: schema.sensitive_index(),
        target_column: schema.target_index(),
        sensitive_levels: schema.sensitive_levels().len(),
        sensitive_counts: Vec::new(),
    };
    let mut ds = encode_with_state(table, schema, &state)?;
    ds.state.sensitive_counts = ds.sensitive_counts();
    Ok(ds)
}

/// Encodes `table` with previously fitted statistics.
pub fn encode_with_state(table: &RawTable, schema: &FeatureSchema, state: &EncodingState) -> Result<EncodedDataset> {
    let n = table.len();
    let width = state.x_width();
    let mut x = Matrix::zeros(n, width);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != schema.columns.len() {
            return Err(Error::RaggedRow { row: r + 1, expected: schema.columns.len(), found: row.len() });
        }
        let out = x.row_mut(r);
        for slot in &state.slots {
            match (slot.kind, row[slot.column]) {
                (SlotKind::Categorical { levels }, RawValue::Level(l)) if l < levels => out[slot.offset + l] = 1.0,
                (SlotKind::Numeric { mean, std }, RawValue::Number(v)) => out[slot.offset] = (v - mean) / std,
                _ => return Err(Error::InvalidArgument(alloc::format!(
                    "row {}: cell of column `{}` does not match its kind",
                    r + 1,
                    schema.columns[slot.column].name
                ))),
            }
        }
        let sv = row[state.sensitive_column].level().filter(|&l| l < state.sensitive_levels);
        let yv = row[state.target_column].level().filter(|&l| l < 2);
        match (sv, yv) {
            (Some(sv), Some(yv)) => {
                s.push(sv);
                y.push(yv as u8);
            }
            _ => return Err(Error::InvalidArgument(alloc::format!("row {}: sensitive or target cell is not a level", r + 1))),
        }
    }
    let s_onehot = onehot(s.iter().copied(), state.sensitive_levels);
    Ok(EncodedDataset { x, s, s_onehot, y, state: state.clone(), source_rows: (0..n).collect() })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

/// Train and test row positions, each ascending.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n_test = libm::round(n as f64 * test_fraction) as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::EmptySplit { train: n.saturating_sub(n_test), test: n_test });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(seed, 0x5117));
    let mut test_idx = perm[..n_test].to_vec();
    let mut train_idx = perm[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((train_idx, test_idx))
}

/// Splits a raw table and encodes both sides with statistics fitted on the
/// train rows. Same partition as [`split`], but the numeric columns are
/// standardized from the raw values, so re-encoding either side with the
/// train state reproduces it exactly.
pub fn split_table(
    table: &RawTable,
    schema: &FeatureSchema,
    test_fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    let (train_idx, test_idx) = split_rows(table.len(), test_fraction, seed)?;
    let rows_of = |idx: &[usize]| RawTable { rows: idx.iter().map(|&i| table.rows[i].clone()).collect() };
    let mut train = encode(&rows_of(&train_idx), schema)?;
    let mut test = encode_with_state(&rows_of(&test_idx), schema, &train.state)?;
    train.source_rows = train_idx;
    test.source_rows = test_idx;
    Ok((train, test))
}

/// Shuffled train/test partition.
///
/// Numeric columns are re-standardized on the train side only and the same
/// statistics are applied to the test side. Both sides keep ascending row
/// order.
pub fn split(ds: &EncodedDataset, test_fraction: f64, seed: u64) -> Result<(EncodedDataset, EncodedDataset)> {
    let (train_idx, test_idx) = split_rows(ds.len(), test_fraction, seed)?;
    let mut train = ds.select(&train_idx);
    let mut test = ds.select(&test_idx);
    for slot_i in 0..ds.state.slots.len() {
        let slot = ds.state.slots[slot_i];
        if let SlotKind::Numeric { mean, std } = slot.kind {
            let c = slot.offset;
            let raw_train: Vec<f64> = (0..train.len()).map(|r| train.x.get(r, c) * std + mean).collect();
            let (new_mean, new_std) = mean_std(&raw_train);
            if !(new_std > 0.0) {
                return Err(Error::ZeroVariance(alloc::format!("column {} (train split)", slot.column)));
            }
            for (r, raw) in raw_train.iter().enumerate() {
                train.x.set(r, c, (raw - new_mean) / new_std);
            }
            for r in 0..test.len() {
                let raw = test.x.get(r, c) * std + mean;
                test.x.set(r, c, (raw - new_mean) / new_std);
            }
            let kind = SlotKind::Numeric { mean: new_mean, std: new_std };
            let domain = Some(NumericDomain::fit(&raw_train));
            for st in [&mut train.state, &mut test.state] {
                st.slots[slot_i].kind = kind;
                st.slots[slot_i].domain = domain;
            }
        }
    }
    train.state.sensitive_counts = train.sensitive_counts();
    test.state.sensitive_counts = train.state.sensitive_counts.clone();
    Ok((train, test))
}

/// Row positions of each mini-batch for one epoch.
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(shuffle_seed, 0xba7c));
    perm.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub s_onehot: Matrix,
    pub s: Vec<usize>,
    pub y: Vec<u8>,
    /// Positions of the batch rows within the dataset.
    pub indices: Vec<usize>,
}

/// One epoch of shuffled mini-batches; every row appears exactly once.
pub fn batches(ds: &EncodedDataset, batch_size: usize, shuffle_seed: u64) -> impl Iterator<Item = Batch> + '_ {
    batch_indices(ds.len(), batch_size, shuffle_seed).into_iter().map(move |idx| Batch {
        x: ds.x.select_rows(&idx),
        s_onehot: ds.s_onehot.select_rows(&idx),
        s: idx.iter().map(|&i| ds.s[i]).collect(),
        y: idx.iter().map(|&i| ds.y[i]).collect(),
        indices: idx,
    })
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverts the encoding.
///
/// `values` follows the `[x | onehot(y)]` layout of
/// [`EncodingState::output_slots`]: categorical groups may hold logits (the
/// level is their argmax, first index on ties), numeric entries are
/// standardized values, mapped back into the column's fitted domain when one
/// is recorded. The sensitive column is filled from `sensitive`.
pub fn decode_records(
    values: &Matrix,
    sensitive: &[usize],
    schema: &FeatureSchema,
    state: &EncodingState,
) -> Result<RawTable> {
    if values.cols() != state.output_width() {
        return Err(Error::dim("decode_records", values.shape(), (values.rows(), state.output_width())));
    }
    if sensitive.len() != values.rows() {
        return Err(Error::dim("decode_records (sensitive)", values.shape(), (sensitive.len(), 1)));
    }
    let slots = state.output_slots();
    let mut rows = Vec::with_capacity(values.rows());
    for (r, &s) in sensitive.iter().enumerate() {
        if s >= state.sensitive_levels {
            return Err(Error::InvalidArgument(alloc::format!("sensitive level {s} out of range")));
        }
        let v = values.row(r);
        let mut row = vec![RawValue::Number(0.0); schema.columns.len()];
        for slot in &slots {
            row[slot.column] = match slot.kind {
                SlotKind::Categorical { levels } => RawValue::Level(argmax(&v[slot.offset..slot.offset + levels])),
                SlotKind::Numeric { mean, std } => {
                    let raw = v[slot.offset] * std + mean;
                    RawValue::Number(slot.domain.map_or(raw, |d| d.project(raw)))
                }
            };
        }
        row[state.sensitive_column] = RawValue::Level(s);
        rows.push(row);
    }
    Ok(RawTable { rows })
}
