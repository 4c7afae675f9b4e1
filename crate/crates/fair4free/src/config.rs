//! Pipeline configuration: one JSON document, overridable key by key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fair4free_core::distill::DistillConfig;
use fair4free_core::eval::EvalConfig;
use fair4free_core::fairvae::TeacherTrainConfig;
use fair4free_core::synth::{Decoding, SensitiveStrategy};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{read_json, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub schema_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Number of synthetic records; defaults to the size of the train split.
    pub n_samples: Option<usize>,
    pub seed: u64,
    pub s_strategy: SensitiveStrategy,
    pub decoding: Decoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub teacher: TeacherTrainConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl PipelineConfig {
    pub fn new(dataset: &Path, schema: &Path) -> Self {
        PipelineConfig {
            dataset: DatasetConfig { path: dataset.into(), schema_path: schema.into() },
            split: SplitConfig::default(),
            teacher: TeacherTrainConfig::default(),
            distill: DistillConfig::default(),
            generate: GenerateConfig::default(),
            eval: EvalConfig::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            bail!("split.test_fraction must lie in (0, 1)");
        }
        self.teacher.validate().context("teacher config")?;
        self.distill.validate().context("distill config")?;
        self.eval.forest.validate().context("eval config")?;
        if self.eval.k == 0 {
            bail!("eval.k must be positive");
        }
        Ok(())
    }

    /// Sets every seed in the configuration to `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.teacher.seed = seed;
        self.distill.seed = seed;
        self.generate.seed = seed;
        self.eval.forest.seed = seed;
    }

    /// Applies `key=value` where `key` is a dotted path such as
    /// `teacher.epochs`. The value is read as JSON when it parses, otherwise
    /// as a string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').with_context(|| format!("override `{assignment}` lacks `=`"))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node.as_object_mut().with_context(|| format!("`{key}`: `{}` is not a section", parts[..i].join(".")))?;
            if i + 1 == parts.len() {
                if !obj.contains_key(*part) {
                    bail!("unknown configuration key `{key}`");
                }
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*part).with_context(|| format!("unknown configuration key `{key}`"))?;
        }
        let updated: PipelineConfig =
            serde_json::from_value(doc).with_context(|| format!("invalid value for `{key}`: {raw}"))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
