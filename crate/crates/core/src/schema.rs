//! Declarative table schemas and schema-validated raw tables.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum ColumnKind {
    Categorical { levels: Vec<String> },
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Column {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: ColumnKind,
}

impl Column {
    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical { levels: levels.iter().map(|l| l.to_string()).collect() },
        }
    }

    pub fn numeric(name: &str) -> Self {
        Column { name: name.into(), kind: ColumnKind::Numeric }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            ColumnKind::Categorical { levels } => Some(levels),
            ColumnKind::Numeric => None,
        }
    }
}

/// Column layout of a tabular dataset.
///
/// The target column's level at index 1 is the positive class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
    pub sensitive: String,
    pub target: String,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>, sensitive: &str, target: &str) -> Result<Self> {
        let schema = FeatureSchema { columns, sensitive: sensitive.into(), target: target.into() };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", c.name)));
            }
            if let ColumnKind::Categorical { levels } = &c.kind {
                if levels.is_empty() {
                    return Err(Error::InvalidSchema(format!("column `{}` has no levels", c.name)));
                }
                for (j, l) in levels.iter().enumerate() {
                    if levels[..j].contains(l) {
                        return Err(Error::InvalidSchema(format!("column `{}` repeats level `{l}`", c.name)));
                    }
                }
            }
        }
        if self.sensitive == self.target {
            return Err(Error::InvalidSchema("sensitive and target columns must differ".into()));
        }
        let s = self.column(&self.sensitive).ok_or_else(|| Error::MissingColumn(self.sensitive.clone()))?;
        match s.levels() {
            Some(l) if l.len() >= 2 => {}
            _ => {
                return Err(Error::InvalidSchema(format!(
                    "sensitive column `{}` must be categorical with at least 2 levels",
                    self.sensitive
                )))
            }
        }
        let t = self.column(&self.target).ok_or_else(|| Error::MissingColumn(self.target.clone()))?;
        match t.levels() {
            Some(l) if l.len() == 2 => {}
            _ => {
                return Err(Error::InvalidSchema(format!(
                    "target column `{}` must be categorical with exactly 2 levels",
                    self.target
                )))
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn sensitive_index(&self) -> usize {
        self.index_of(&self.sensitive).expect("validated schema")
    }

    pub fn target_index(&self) -> usize {
        self.index_of(&self.target).expect("validated schema")
    }

    pub fn sensitive_levels(&self) -> &[String] {
        self.columns[self.sensitive_index()].levels().expect("validated schema")
    }

    pub fn target_levels(&self) -> &[String] {
        self.columns[self.target_index()].levels().expect("validated schema")
    }

    /// Indices of the columns that make up the feature matrix `x`: every
    /// column except the sensitive attribute and the target, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        let (s, t) = (self.sensitive_index(), self.target_index());
        (0..self.columns.len()).filter(|&i| i != s && i != t).collect()
    }
}

/// A validated cell: a level index for categoricals, a value for numerics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue {
    Level(usize),
    Number(f64),
}

impl RawValue {
    pub fn level(self) -> Option<usize> {
        match self {
            RawValue::Level(l) => Some(l),
            RawValue::Number(_) => None,
        }
    }

    pub fn number(self) -> Option<f64> {
        match self {
            RawValue::Number(v) => Some(v),
            RawValue::Level(_) => None,
        }
    }
}

/// Rows of validated cells, columns in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub rows: Vec<Vec<RawValue>>,
}

impl RawTable {
    /// Validates string records against `schema`.
    ///
    /// `header` may list the schema's columns in any order; cells are realigned
    /// to schema order. Row numbers in errors are 1-based data rows.
    pub fn from_string_records<R, S>(schema: &FeatureSchema, header: &[S], records: R) -> Result<Self>
    where
        R: IntoIterator,
        R::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut position = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            let p = header
                .iter()
                .position(|h| h.as_ref().trim() == c.name)
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))?;
            position.push(p);
        }
        if let Some(extra) = header.iter().find(|h| schema.column(h.as_ref().trim()).is_none()) {
            return Err(Error::ExtraColumn(extra.as_ref().to_string()));
        }
        let mut rows = Vec::new();
        for (i, rec) in records.into_iter().enumerate() {
            let rec = rec.as_ref();
            let row_no = i + 1;
            if rec.len() != header.len() {
                return Err(Error::RaggedRow { row: row_no, expected: header.len(), found: rec.len() });
            }
            let mut row = Vec::with_capacity(schema.columns.len());
            for (c, &p) in schema.columns.iter().zip(&position) {
                row.push(parse_cell(c, rec[p].as_ref(), row_no)?);
            }
            rows.push(row);
        }
        Ok(RawTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cells rendered as strings, columns in schema order.
    pub fn to_string_records(&self, schema: &FeatureSchema) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&schema.columns)
                    .map(|(v, c)| match (v, &c.kind) {
                        (RawValue::Level(l), ColumnKind::Categorical { levels }) => levels[*l].clone(),
                        (RawValue::Number(x), _) => format!("{x}"),
                        (RawValue::Level(l), ColumnKind::Numeric) => format!("{l}"),
                    })
                    .collect()
            })
            .collect()
    }
}

fn parse_cell(column: &Column, text: &str, row: usize) -> Result<RawValue> {
    let text = text.trim();
    match &column.kind {
        ColumnKind::Categorical { levels } => levels
            .iter()
            .position(|l| l == text)
            .map(RawValue::Level)
            .ok_or_else(|| Error::UnknownLevel { row, column: column.name.clone(), value: text.into() }),
        ColumnKind::Numeric => match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(RawValue::Number(v)),
            _ => Err(Error::UnparseableNumeric { row, column: column.name.clone(), value: text.into() }),
        },
    }
}
