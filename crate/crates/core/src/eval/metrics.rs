//! Group fairness ratios and binary utility metrics. Class 1 is positive.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `min / max` over group rates; `1` when every rate is zero.
fn min_max_ratio(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 1.0;
    }
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    min / max
}

fn check_lengths(a: usize, b: usize, op: &'static str) -> Result<()> {
    if a != b {
        return Err(Error::dim(op, (a, 1), (b, 1)));
    }
    if a == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Ratio of the lowest to the highest positive-prediction rate across the
/// `n_groups` sensitive groups.
pub fn demographic_parity_ratio(yhat: &[u8], s: &[usize], n_groups: usize) -> Result<f64> {
    check_lengths(yhat.len(), s.len(), "demographic_parity_ratio")?;
    let mut n = vec![0usize; n_groups];
    let mut pos = vec![0usize; n_groups];
    for (&p, &g) in yhat.iter().zip(s) {
        if g >= n_groups {
            return Err(Error::InvalidArgument(alloc::format!("group {g} out of range")));
        }
        n[g] += 1;
        pos[g] += usize::from(p == 1);
    }
    let mut rates = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        if n[g] == 0 {
            return Err(Error::MissingGroup(g));
        }
        rates.push(pos[g] as f64 / n[g] as f64);
    }
    Ok(min_max_ratio(&rates))
}

/// The smaller of the TPR ratio and the FPR ratio across groups, each ratio
/// being `min / max` over groups with `0/0` read as 1.
pub fn equalized_odds_ratio(yhat: &[u8], y: &[u8], s: &[usize], n_groups: usize) -> Result<f64> {
    check_lengths(yhat.len(), y.len(), "equalized_odds_ratio")?;
    check_lengths(yhat.len(), s.len(), "equalized_odds_ratio")?;
    // counts[g][label] = (rows, predicted positive)
    let mut counts = vec![[(0usize, 0usize); 2]; n_groups];
    for ((&p, &t), &g) in yhat.iter().zip(y).zip(s) {
        if g >= n_groups {
            return Err(Error::InvalidArgument(alloc::format!("group {g} out of range")));
        }
        let c = &mut counts[g][usize::from(t == 1)];
        c.0 += 1;
        c.1 += usize::from(p == 1);
    }
    let mut tpr = Vec::with_capacity(n_groups);
    let mut fpr = Vec::with_capacity(n_groups);
    for (g, c) in counts.iter().enumerate() {
        if c[0].0 + c[1].0 == 0 {
            return Err(Error::MissingGroup(g));
        }
        if c[1].0 == 0 {
            return Err(Error::UndefinedRate { rate: "TPR", group: g, label: 1 });
        }
        if c[0].0 == 0 {
            return Err(Error::UndefinedRate { rate: "FPR", group: g, label: 0 });
        }
        tpr.push(c[1].1 as f64 / c[1].0 as f64);
        fpr.push(c[0].1 as f64 / c[0].0 as f64);
    }
    Ok(min_max_ratio(&tpr).min(min_max_ratio(&fpr)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Utility {
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, recall and F1; recall is 0 without positives and F1 is 0 when
/// precision and recall are both 0.
pub fn utility_metrics(yhat: &[u8], y: &[u8]) -> Result<Utility> {
    check_lengths(yhat.len(), y.len(), "utility_metrics")?;
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in yhat.iter().zip(y) {
        correct += usize::from(p == t);
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let accuracy = correct as f64 / y.len() as f64;
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Utility { accuracy, recall, f1 })
}
