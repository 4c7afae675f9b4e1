//! Joint principal component projection of two samples.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub a: Matrix,
    pub b: Matrix,
    /// `k x dims`, orthonormal columns sorted by decreasing variance; each
    /// column's largest-magnitude entry is positive.
    pub components: Matrix,
    pub mean: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = alloc::vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (acc, v) in s.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    s
}

fn scatter(m: &Matrix, mean: &[f64]) -> DMatrix<f64> {
    let k = m.cols();
    let mut c = DMatrix::zeros(k, k);
    for r in 0..m.rows() {
        let row = m.row(r);
        for i in 0..k {
            let di = row[i] - mean[i];
            for j in 0..k {
                c[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    c
}

fn project(m: &Matrix, mean: &[f64], comps: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), comps.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        for d in 0..comps.cols() {
            let v = (0..m.cols()).map(|i| (row[i] - mean[i]) * comps.get(i, d)).sum();
            out.set(r, d, v);
        }
    }
    out
}

/// Projects `a` and `b` onto the top `dims` principal components of their
/// union. The result does not depend on which sample is passed first.
pub fn pca_project(a: &Matrix, b: &Matrix, dims: usize) -> Result<PcaProjection> {
    let k = a.cols();
    if b.cols() != k {
        return Err(Error::dim("pca_project", a.shape(), b.shape()));
    }
    if dims == 0 || dims > k {
        return Err(Error::InvalidArgument(alloc::format!("cannot take {dims} components of {k} dimensions")));
    }
    let n = a.rows() + b.rows();
    if n < 2 {
        return Err(Error::TooFewRows { op: "pca_project", needed: 2, got: n });
    }
    // sums are formed per sample and then added, so swapping a and b gives
    // bit-identical statistics
    let mean: Vec<f64> = column_sums(a).iter().zip(column_sums(b)).map(|(x, y)| (x + y) / n as f64).collect();
    let cov = (scatter(a, &mean) + scatter(b, &mean)) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    if !(eig.eigenvalues[order[0]] > 0.0) {
        return Err(Error::DegenerateData);
    }
    let mut comps = Matrix::zeros(k, dims);
    let mut explained = Vec::with_capacity(dims);
    for (d, &e) in order.iter().take(dims).enumerate() {
        let v = eig.eigenvectors.column(e);
        let mut lead = 0;
        for i in 1..k {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            comps.set(i, d, sign * v[i]);
        }
        explained.push(eig.eigenvalues[e].max(0.0));
    }
    Ok(PcaProjection { a: project(a, &mean, &comps), b: project(b, &mean, &comps), components: comps, mean, explained_variance: explained })
}
