//! Versioned JSON model files.
//!
//! Weights are stored as flat row-major arrays; `serde_json` renders every
//! `f64` with a round-trip-safe decimal, so saving and loading is lossless.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fair4free_core::distill::StudentParams;
use fair4free_core::encoding::EncodingState;
use fair4free_core::fairvae::{heads_for, TeacherParams};
use fair4free_core::numkernel::Linear;
use fair4free_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json};

pub const TEACHER_FORMAT: &str = "fair4free-teacher/1";
pub const STUDENT_FORMAT: &str = "fair4free-student/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub input: usize,
    pub output: usize,
    /// `input x output`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerWeights {
    fn from_linear(l: &Linear) -> Self {
        LayerWeights {
            input: l.input_dim(),
            output: l.output_dim(),
            weight: l.weight.value.as_slice().to_vec(),
            bias: l.bias.value.as_slice().to_vec(),
        }
    }

    fn to_linear(&self) -> Result<Linear> {
        let w = Matrix::from_vec(self.input, self.output, self.weight.clone())?;
        let b = Matrix::from_vec(1, self.output, self.bias.clone())?;
        Ok(Linear::from_values(w, b)?)
    }
}

fn layer(weights: &BTreeMap<String, LayerWeights>, name: &str) -> Result<Linear> {
    weights.get(name).with_context(|| format!("model file lacks layer `{name}`"))?.to_linear()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherFile {
    pub format: String,
    pub schema_hash: String,
    pub k: usize,
    pub h: usize,
    pub beta: u8,
    pub encoding: EncodingState,
    pub weights: BTreeMap<String, LayerWeights>,
}

impl TeacherFile {
    pub fn new(params: &TeacherParams, encoding: &EncodingState, schema_hash: &str, beta: u8) -> Self {
        TeacherFile {
            format: TEACHER_FORMAT.into(),
            schema_hash: schema_hash.into(),
            k: params.latent_dim,
            h: params.hidden_dim,
            beta,
            encoding: encoding.clone(),
            weights: params.layers().iter().map(|(n, l)| (n.to_string(), LayerWeights::from_linear(l))).collect(),
        }
    }

    pub fn params(&self) -> Result<TeacherParams> {
        let layers = [
            layer(&self.weights, "encoder.hidden")?,
            layer(&self.weights, "encoder.out")?,
            layer(&self.weights, "decoder.hidden")?,
            layer(&self.weights, "decoder.out")?,
        ];
        let p = TeacherParams::from_layers(layers, heads_for(&self.encoding), self.encoding.sensitive_levels)?;
        if p.latent_dim != self.k || p.hidden_dim != self.h {
            bail!("teacher header (k={}, h={}) disagrees with its weights", self.k, self.h);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: TeacherFile = read_json(path)?;
        if f.format != TEACHER_FORMAT {
            bail!("{}: expected format `{TEACHER_FORMAT}`, found `{}`", path.display(), f.format);
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentFile {
    pub format: String,
    pub schema_hash: String,
    pub k: usize,
    pub noise_dim: usize,
    pub weights: BTreeMap<String, LayerWeights>,
}

impl StudentFile {
    pub fn new(params: &StudentParams, schema_hash: &str) -> Self {
        StudentFile {
            format: STUDENT_FORMAT.into(),
            schema_hash: schema_hash.into(),
            k: params.latent_dim,
            noise_dim: params.noise_dim,
            weights: params.layers().iter().map(|(n, l)| (n.to_string(), LayerWeights::from_linear(l))).collect(),
        }
    }

    pub fn params(&self) -> Result<StudentParams> {
        let p = StudentParams::from_layers(layer(&self.weights, "hidden")?, layer(&self.weights, "out")?)?;
        if p.latent_dim != self.k || p.noise_dim != self.noise_dim {
            bail!("student header (k={}, noise_dim={}) disagrees with its weights", self.k, self.noise_dim);
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: StudentFile = read_json(path)?;
        if f.format != STUDENT_FORMAT {
            bail!("{}: expected format `{STUDENT_FORMAT}`, found `{}`", path.display(), f.format);
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
