//! Downstream evaluation: a random forest trained on (synthetic) data and
//! tested on held-out real rows, scored for group fairness, utility and
//! sample quality.

pub mod forest;
pub mod metrics;
pub mod pca;
pub mod quality;

use alloc::string::String;
use alloc::vec::Vec;

pub use forest::{fit_forest, Forest, ForestConfig, ForestTrainer};
pub use metrics::{demographic_parity_ratio, equalized_odds_ratio, utility_metrics, Utility};
pub use pca::{pca_project, PcaProjection};
pub use quality::{density_coverage, energy_distance};

use crate::encoding::{encode_with_state, EncodedDataset, EncodingState};
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;
use crate::synth::{Provenance, SyntheticDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EvalConfig {
    pub forest: ForestConfig,
    /// Neighbourhood size for density and coverage.
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { forest: ForestConfig::default(), k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColumnImportance {
    pub column: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub dpr: f64,
    pub eor: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    pub density: f64,
    pub coverage: f64,
    pub feature_importances: Vec<ColumnImportance>,
    pub n_train: usize,
    pub n_test: usize,
    pub config: EvalConfig,
    pub provenance: Option<Provenance>,
}

impl EvalReport {
    pub fn importance_of(&self, column: &str) -> Option<f64> {
        self.feature_importances.iter().find(|c| c.column == column).map(|c| c.importance)
    }
}

/// Forest importances summed back onto schema columns, for a forest fit on
/// `[x | onehot(s)]`.
pub fn feature_importance(forest: &Forest, schema: &FeatureSchema, state: &EncodingState) -> Vec<ColumnImportance> {
    let mapping = state.forest_feature_columns();
    let raw = forest.feature_importances();
    let mut per_column = alloc::vec![0.0; schema.columns.len()];
    for (&col, v) in mapping.iter().zip(&raw) {
        per_column[col] += v;
    }
    let mut cols: Vec<usize> = state.slots.iter().map(|s| s.column).collect();
    cols.push(state.sensitive_column);
    cols.sort_unstable();
    cols.into_iter()
        .map(|c| ColumnImportance { column: schema.columns[c].name.clone(), importance: per_column[c] })
        .collect()
}

/// Trains on `train`, scores on `test`. `fit` turns the prepared trainer into
/// a forest, which lets callers fit trees in parallel.
pub fn evaluate_encoded(
    train: &EncodedDataset,
    test: &EncodedDataset,
    schema: &FeatureSchema,
    cfg: &EvalConfig,
    fit: impl FnOnce(&ForestTrainer) -> Forest,
) -> Result<EvalReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    if train.state.slots != test.state.slots || train.state.sensitive_levels != test.state.sensitive_levels {
        return Err(Error::InvalidArgument("train and test sets use different encodings".into()));
    }
    let trainer = ForestTrainer::new(&train.forest_input(), &train.y, cfg.forest)?;
    let forest = fit(&trainer);
    let yhat = forest.predict(&test.forest_input())?;
    let groups = test.state.sensitive_levels;
    let dpr = demographic_parity_ratio(&yhat, &test.s, groups)?;
    let eor = equalized_odds_ratio(&yhat, &test.y, &test.s, groups)?;
    let u = utility_metrics(&yhat, &test.y)?;
    let (density, coverage) = density_coverage(&test.x, &train.x, cfg.k)?;
    Ok(EvalReport {
        dpr,
        eor,
        accuracy: u.accuracy,
        recall: u.recall,
        f1: u.f1,
        density,
        coverage,
        feature_importances: feature_importance(&forest, schema, &test.state),
        n_train: train.len(),
        n_test: test.len(),
        config: *cfg,
        provenance: None,
    })
}

/// Train on synthetic records, test on the held-out real split.
pub fn evaluate_synthetic(
    real_test: &EncodedDataset,
    synth: &SyntheticDataset,
    schema: &FeatureSchema,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let encoded = encode_with_state(&synth.table, schema, &real_test.state)?;
    let mut report = evaluate_encoded(&encoded, real_test, schema, cfg, ForestTrainer::fit)?;
    report.provenance = Some(synth.provenance.clone());
    Ok(report)
}

/// The real-data reference: train on the real train split instead.
pub fn evaluate_real(
    real_train: &EncodedDataset,
    real_test: &EncodedDataset,
    schema: &FeatureSchema,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_encoded(real_train, real_test, schema, cfg, ForestTrainer::fit)
}
