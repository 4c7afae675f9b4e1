//! CSV tables, schema files and JSON helpers.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use fair4free_core::schema::{FeatureSchema, RawTable};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let schema: FeatureSchema = read_json(path)?;
    schema.validate().with_context(|| format!("schema {}", path.display()))?;
    Ok(schema)
}

/// Hex SHA-256 of the schema's canonical JSON rendering.
pub fn schema_hash(schema: &FeatureSchema) -> String {
    sha256_hex(&serde_json::to_vec(schema).expect("schema serializes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Reads a headed CSV file and validates it against `schema`.
pub fn read_table(path: &Path, schema: &FeatureSchema) -> Result<RawTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(BufReader::new(file));
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: data row {}", path.display(), i + 1))?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    RawTable::from_string_records(schema, &header, &records).with_context(|| format!("validating {}", path.display()))
}

pub fn write_table(path: &Path, schema: &FeatureSchema, table: &RawTable) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    for rec in table.to_string_records(schema) {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
