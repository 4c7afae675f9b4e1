//! Small planted datasets shared by the integration tests.

#![allow(dead_code)]

use fair4free_core::encoding::{encode, EncodedDataset};
use fair4free_core::schema::{Column, FeatureSchema, RawTable, RawValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn planted_schema() -> FeatureSchema {
    FeatureSchema::new(
        vec![
            Column::numeric("a"),
            Column::numeric("b"),
            Column::categorical("colour", &["red", "green", "blue"]),
            Column::categorical("sex", &["Female", "Male"]),
            Column::numeric("c"),
            Column::categorical("label", &["no", "yes"]),
        ],
        "sex",
        "label",
    )
    .unwrap()
}

/// Rows driven by one shared factor `u`: the numeric features are `u` scaled
/// by a factor that depends on the sensitive level, and the label is the sign
/// of `u`.
pub fn planted_table(n: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let s = rng.random_range(0..2usize);
            let scale = if s == 1 { 3.0 } else { 1.0 };
            let mut e = || rng.sample::<f64, _>(StandardNormal);
            let u = e();
            let (a, b, c) = (scale * (u + 0.1 * e()), scale * (u + 0.1 * e()), scale * (u + 0.1 * e()));
            let label = usize::from(u + 0.2 * e() > 0.0);
            let colour = if rng.random_bool(0.8) { s } else { 2 };
            vec![
                RawValue::Number(a),
                RawValue::Number(b),
                RawValue::Level(colour),
                RawValue::Level(s),
                RawValue::Number(c),
                RawValue::Level(label),
            ]
        })
        .collect();
    RawTable { rows }
}

pub fn planted(n: usize, seed: u64) -> (FeatureSchema, EncodedDataset) {
    let schema = planted_schema();
    let ds = encode(&planted_table(n, seed), &schema).unwrap();
    (schema, ds)
}
