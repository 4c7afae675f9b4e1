//! PCA overlap output: CSV rows and a standalone SVG scatter plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fair4free_core::distill::sample_student;
use fair4free_core::eval::{energy_distance, pca_project, PcaProjection};
use fair4free_core::fairvae::{encode_dataset, reparameterize};
use fair4free_core::numkernel::sample_standard_normal;
use fair4free_core::Matrix;

use crate::models::{StudentFile, TeacherFile};
use crate::pipeline::Prepared;

/// `n` teacher latent samples from the test split against `n` student
/// samples. Test rows are reused in order when the split has fewer than `n`,
/// each reuse with a fresh draw.
pub struct LatentOverlap {
    pub projection: PcaProjection,
    pub energy_distance: f64,
}

pub fn latent_overlap(prep: &Prepared, teacher: &TeacherFile, student: &StudentFile, n: usize, seed: u64) -> Result<LatentOverlap> {
    let tparams = teacher.params()?;
    let idx: Vec<usize> = (0..n).map(|i| i % prep.test.len()).collect();
    let lat = encode_dataset(&prep.test.select(&idx), &tparams)?;
    let teacher_z = reparameterize(&lat, &sample_standard_normal(idx.len(), tparams.latent_dim, seed))?;
    let student_z = sample_student(&student.params()?, n, seed)?;
    let projection = pca_project(&teacher_z, &student_z, 2)?;
    let energy_distance = energy_distance(&projection.a, &projection.b)?;
    Ok(LatentOverlap { projection, energy_distance })
}

pub fn write_csv(path: &Path, labels: [&str; 2], p: &PcaProjection) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["set", "dim1", "dim2"])?;
    for (label, m) in labels.iter().zip([&p.a, &p.b]) {
        for r in 0..m.rows() {
            w.write_record([label.to_string(), m.get(r, 0).to_string(), m.get(r, 1).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn render_svg(labels: [&str; 2], p: &PcaProjection) -> String {
    const W: f64 = 480.0;
    const PAD: f64 = 40.0;
    let all = [&p.a, &p.b];
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for m in all {
        for r in 0..m.rows() {
            for d in 0..2 {
                lo[d] = lo[d].min(m.get(r, d));
                hi[d] = hi[d].max(m.get(r, d));
            }
        }
    }
    let scale = |v: f64, d: usize| {
        let span = (hi[d] - lo[d]).max(1e-12);
        let t = (v - lo[d]) / span;
        if d == 0 {
            PAD + t * (W - 2.0 * PAD)
        } else {
            W - PAD - t * (W - 2.0 * PAD)
        }
    };
    let colors = ["#1f77b4", "#d62728"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for ((m, color), label) in all.iter().zip(colors).zip(labels) {
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.35"><title>{label}</title>"#);
        for r in 0..m.rows() {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.8"/>"#, scale(m.get(r, 0), 0), scale(m.get(r, 1), 1));
        }
        let _ = writeln!(s, "</g>");
    }
    for (i, (label, color)) in labels.iter().zip(colors).enumerate() {
        let y = 18.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<circle cx="14" cy="{}" r="5" fill="{color}"/><text x="24" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#, y, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>"#, W / 2.0, W - 10.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">PC2</text>"#, W / 2.0, W / 2.0);
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, labels: [&str; 2], p: &PcaProjection) -> Result<()> {
    fs::write(path, render_svg(labels, p)).with_context(|| format!("writing {}", path.display()))
}

/// Column means and population standard deviations.
pub fn moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mean = m.column_means();
    let mut var = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            var[c] += (v - mean[c]).powi(2) / n;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}
