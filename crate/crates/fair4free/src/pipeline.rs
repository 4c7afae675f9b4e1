//! Pipeline stages. Each stage reads its prerequisites from the output
//! directory, writes its artifact plus a `manifest.json`, and returns the
//! in-memory result.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use fair4free_core::distill::{train_student_with, StudentEpoch};
use fair4free_core::encoding::{encode_with_state, split_table, EncodedDataset, EncodingState};
use fair4free_core::eval::{evaluate_encoded, EvalReport};
use fair4free_core::fairvae::{train_teacher_with, TeacherEpoch};
use fair4free_core::schema::FeatureSchema;
use fair4free_core::synth::{generate_with, SyntheticDataset};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::io::{file_sha256, load_schema, read_json, read_table, schema_hash, write_json, write_table};
use crate::models::{StudentFile, TeacherFile};
use crate::parallel::fit_forest_parallel;
use crate::RuntimeFailure;

pub const PREPARE_DIR: &str = "prepare";
pub const TEACHER_DIR: &str = "teacher";
pub const STUDENT_DIR: &str = "student";
pub const SYNTH_DIR: &str = "synthetic";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub wall_time_secs: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub teacher: u64,
    pub distill: u64,
    pub generate: u64,
    pub forest: u64,
}

fn write_manifest(dir: &Path, stage: &str, cfg: &PipelineConfig, start: Instant, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let m = Manifest {
        stage: stage.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seeds: Seeds {
            split: cfg.split.seed,
            teacher: cfg.teacher.seed,
            distill: cfg.distill.seed,
            generate: cfg.generate.seed,
            forest: cfg.eval.forest.seed,
        },
        wall_time_secs: start.elapsed().as_secs_f64(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config: cfg.clone(),
    };
    write_json(&dir.join("manifest.json"), &m)
}

fn stage_dir(cfg: &PipelineConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if !path.exists() {
        anyhow::bail!("missing {}; run the `{stage}` stage first", path.display());
    }
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFile {
    pub schema_hash: String,
    pub dataset_sha256: String,
    pub test_fraction: f64,
    pub seed: u64,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub encoding: EncodingState,
}

/// Schema plus encoded train and test splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let start = Instant::now();
    let schema = load_schema(&cfg.dataset.schema_path)?;
    let table = read_table(&cfg.dataset.path, &schema)?;
    let (train, test) = split_table(&table, &schema, cfg.split.test_fraction, cfg.split.seed)
        .with_context(|| format!("encoding {}", cfg.dataset.path.display()))?;
    let dir = stage_dir(cfg, PREPARE_DIR)?;
    let hash = schema_hash(&schema);
    let split_file = SplitFile {
        schema_hash: hash.clone(),
        dataset_sha256: file_sha256(&cfg.dataset.path)?,
        test_fraction: cfg.split.test_fraction,
        seed: cfg.split.seed,
        train_rows: train.source_rows.clone(),
        test_rows: test.source_rows.clone(),
        encoding: train.state.clone(),
    };
    let rows_of = |idx: &[usize]| fair4free_core::schema::RawTable { rows: idx.iter().map(|&i| table.rows[i].clone()).collect() };
    let (split_path, train_path, test_path) = (dir.join("split.json"), dir.join("train.csv"), dir.join("test.csv"));
    write_json(&split_path, &split_file)?;
    write_table(&train_path, &schema, &rows_of(&train.source_rows))?;
    write_table(&test_path, &schema, &rows_of(&test.source_rows))?;
    write_manifest(&dir, "prepare", cfg, start, &[&cfg.dataset.path, &cfg.dataset.schema_path], &[&split_path, &train_path, &test_path])?;
    Ok(Prepared { schema, schema_hash: hash, train, test })
}

pub fn load_prepared(cfg: &PipelineConfig) -> Result<Prepared> {
    let dir = cfg.output_dir.join(PREPARE_DIR);
    let split_file: SplitFile = read_json(&require(dir.join("split.json"), "prepare")?)?;
    let schema = load_schema(&cfg.dataset.schema_path)?;
    let hash = schema_hash(&schema);
    if hash != split_file.schema_hash {
        anyhow::bail!("schema {} differs from the one used by `prepare`", cfg.dataset.schema_path.display());
    }
    let load = |name: &str| -> Result<EncodedDataset> {
        let table = read_table(&require(dir.join(name), "prepare")?, &schema)?;
        Ok(encode_with_state(&table, &schema, &split_file.encoding)?)
    };
    Ok(Prepared { train: load("train.csv")?, test: load("test.csv")?, schema, schema_hash: hash })
}

fn write_trace<T: Serialize>(path: &Path, trace: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for rec in trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_teacher(cfg: &PipelineConfig, prep: &Prepared, mut log: impl FnMut(&TeacherEpoch)) -> Result<TeacherFile> {
    let start = Instant::now();
    let (params, trace) = train_teacher_with(&prep.train, &cfg.teacher, &mut log).map_err(RuntimeFailure::wrap)?;
    let file = TeacherFile::new(&params, &prep.train.state, &prep.schema_hash, cfg.teacher.beta);
    let dir = stage_dir(cfg, TEACHER_DIR)?;
    let (model, trace_path) = (dir.join("teacher.json"), dir.join("trace.csv"));
    file.save(&model)?;
    write_trace(&trace_path, &trace)?;
    write_manifest(&dir, "train-teacher", cfg, start, &[&cfg.output_dir.join(PREPARE_DIR)], &[&model, &trace_path])?;
    Ok(file)
}

pub fn load_teacher(cfg: &PipelineConfig, prep: &Prepared) -> Result<TeacherFile> {
    let file = TeacherFile::load(&require(cfg.output_dir.join(TEACHER_DIR).join("teacher.json"), "train-teacher")?)?;
    if file.schema_hash != prep.schema_hash {
        return Err(fair4free_core::Error::IncompatibleModels("teacher was trained under a different schema".into()).into());
    }
    Ok(file)
}

pub fn distill(cfg: &PipelineConfig, prep: &Prepared, teacher: &TeacherFile, mut log: impl FnMut(&StudentEpoch)) -> Result<StudentFile> {
    let start = Instant::now();
    let tparams = teacher.params()?;
    let (params, trace) = train_student_with(&tparams, &prep.train, &cfg.distill, &mut log).map_err(RuntimeFailure::wrap)?;
    let file = StudentFile::new(&params, &prep.schema_hash);
    let dir = stage_dir(cfg, STUDENT_DIR)?;
    let (model, trace_path) = (dir.join("student.json"), dir.join("trace.csv"));
    file.save(&model)?;
    write_trace(&trace_path, &trace)?;
    let teacher_path = cfg.output_dir.join(TEACHER_DIR).join("teacher.json");
    write_manifest(&dir, "distill", cfg, start, &[&teacher_path], &[&model, &trace_path])?;
    Ok(file)
}

pub fn load_student(cfg: &PipelineConfig, prep: &Prepared) -> Result<StudentFile> {
    let file = StudentFile::load(&require(cfg.output_dir.join(STUDENT_DIR).join("student.json"), "distill")?)?;
    if file.schema_hash != prep.schema_hash {
        return Err(fair4free_core::Error::IncompatibleModels("student was trained under a different schema".into()).into());
    }
    Ok(file)
}

pub fn generate_synthetic(
    cfg: &PipelineConfig,
    prep: &Prepared,
    teacher: &TeacherFile,
    student: &StudentFile,
) -> Result<SyntheticDataset> {
    let start = Instant::now();
    if teacher.schema_hash != student.schema_hash {
        return Err(fair4free_core::Error::IncompatibleModels("teacher and student schema hashes differ".into()).into());
    }
    let n = cfg.generate.n_samples.unwrap_or(prep.train.len());
    let mut synth = generate_with(
        &student.params()?,
        &teacher.params()?,
        &prep.schema,
        &teacher.encoding,
        n,
        cfg.generate.seed,
        &cfg.generate.s_strategy,
        cfg.generate.decoding,
    )?;
    let teacher_path = cfg.output_dir.join(TEACHER_DIR).join("teacher.json");
    let student_path = cfg.output_dir.join(STUDENT_DIR).join("student.json");
    synth.provenance.teacher = Some(teacher_path.display().to_string());
    synth.provenance.student = Some(student_path.display().to_string());
    let dir = stage_dir(cfg, SYNTH_DIR)?;
    let (data, prov) = (dir.join("synthetic.csv"), dir.join("provenance.json"));
    write_table(&data, &prep.schema, &synth.table)?;
    write_json(&prov, &synth.provenance)?;
    write_manifest(&dir, "generate", cfg, start, &[&teacher_path, &student_path], &[&data, &prov])?;
    Ok(synth)
}

pub fn load_synthetic(cfg: &PipelineConfig, prep: &Prepared) -> Result<SyntheticDataset> {
    let dir = cfg.output_dir.join(SYNTH_DIR);
    let table = read_table(&require(dir.join("synthetic.csv"), "generate")?, &prep.schema)?;
    let provenance = read_json(&require(dir.join("provenance.json"), "generate")?)?;
    Ok(SyntheticDataset { table, provenance })
}

/// Synthetic-trained and real-trained reports, both tested on the real test
/// split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub synthetic: EvalReport,
    pub real: EvalReport,
}

pub fn evaluate(cfg: &PipelineConfig, prep: &Prepared, synth: &SyntheticDataset) -> Result<Evaluation> {
    let start = Instant::now();
    let encoded = encode_with_state(&synth.table, &prep.schema, &prep.test.state)?;
    let mut synthetic = evaluate_encoded(&encoded, &prep.test, &prep.schema, &cfg.eval, fit_forest_parallel)?;
    synthetic.provenance = Some(synth.provenance.clone());
    let real = evaluate_encoded(&prep.train, &prep.test, &prep.schema, &cfg.eval, fit_forest_parallel)?;
    let dir = stage_dir(cfg, EVAL_DIR)?;
    let (rep, base) = (dir.join("report.json"), dir.join("baseline.json"));
    write_json(&rep, &synthetic)?;
    write_json(&base, &real)?;
    let synth_path = cfg.output_dir.join(SYNTH_DIR).join("synthetic.csv");
    write_manifest(&dir, "evaluate", cfg, start, &[&synth_path], &[&rep, &base])?;
    Ok(Evaluation { synthetic, real })
}

pub const SUMMARY_COLUMNS: [&str; 7] = ["DPR", "EOR", "ACC", "Recall", "F1", "Density", "Coverage"];

pub fn summary_header(label: &str) -> String {
    let mut s = format!("{label:<10}");
    for c in SUMMARY_COLUMNS {
        s.push_str(&format!(" {c:>8}"));
    }
    s
}

pub fn summary_row(label: &str, r: &EvalReport) -> String {
    let mut s = format!("{label:<10}");
    for v in [r.dpr, r.eor, r.accuracy, r.recall, r.f1, r.density, r.coverage] {
        s.push_str(&format!(" {v:>8.4}"));
    }
    s
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig, verbose: bool) -> Result<Evaluation> {
    let prep = prepare(cfg)?;
    run_from_prepared(cfg, &prep, verbose)
}

/// Teacher, student, generation and evaluation on an existing split.
pub fn run_from_prepared(cfg: &PipelineConfig, prep: &Prepared, verbose: bool) -> Result<Evaluation> {
    let every = |e: usize, total: usize| verbose && (e == 1 || e == total || e.is_multiple_of((total / 10).max(1)));
    let te = cfg.teacher.epochs;
    let teacher = train_teacher(cfg, prep, |r| {
        if every(r.epoch, te) {
            eprintln!("teacher epoch {:>5}: kl {:.4} nll {:.4} dcov2 {:.5} total {:.4}", r.epoch, r.kl, r.nll, r.dcov2, r.total);
        }
    })?;
    let se = cfg.distill.epochs;
    let student = distill(cfg, prep, &teacher, |r| {
        if every(r.epoch, se) {
            eprintln!("student epoch {:>5}: l1 {:.4} kl {:.4} total {:.4}", r.epoch, r.distillation, r.kl, r.total);
        }
    })?;
    let synth = generate_synthetic(cfg, prep, &teacher, &student)?;
    evaluate(cfg, prep, &synth)
}
