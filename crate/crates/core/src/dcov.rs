//! Empirical distance covariance between latent codes and the sensitive
//! attribute, used as the teacher's fairness penalty.
//!
//! The estimator is the V-statistic `(1/n²) Σ_jk A_jk B_jk`, where `A` and `B`
//! are the double-centered pairwise Euclidean distance matrices of the two
//! samples. Since `B` is double-centered, `Σ A B = Σ a B` for the raw
//! distances `a`, so neither centered matrix has to be materialized and the
//! working set stays O(n) even for large n.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numkernel::{math, Matrix};

/// Materialized estimator components for small samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceStats {
    pub a_centered: Matrix,
    pub b_centered: Matrix,
    pub dcov2: f64,
    pub dvar_z: f64,
    pub dvar_s: f64,
}

#[inline]
fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    math::sqrt(acc)
}

pub fn pairwise_euclidean(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::TooFewRows { op: "pairwise_euclidean", needed: 2, got: n });
    }
    let mut d = Matrix::zeros(n, n);
    for j in 0..n {
        for k in j + 1..n {
            let v = row_distance(m.row(j), m.row(k));
            d.set(j, k, v);
            d.set(k, j, v);
        }
    }
    Ok(d)
}

/// `A_jk = d_jk - rowmean_j - colmean_k + grandmean`.
pub fn double_center(d: &Matrix) -> Matrix {
    let (n, m) = d.shape();
    let mut row_means = vec![0.0; n];
    let mut col_means = vec![0.0; m];
    let mut grand = 0.0;
    for j in 0..n {
        for k in 0..m {
            let v = d.get(j, k);
            row_means[j] += v;
            col_means[k] += v;
            grand += v;
        }
    }
    row_means.iter_mut().for_each(|v| *v /= m as f64);
    col_means.iter_mut().for_each(|v| *v /= n as f64);
    grand /= (n * m) as f64;
    let mut out = Matrix::zeros(n, m);
    for j in 0..n {
        for k in 0..m {
            out.set(j, k, d.get(j, k) - row_means[j] - col_means[k] + grand);
        }
    }
    out
}

fn check_pair(z: &Matrix, s: &Matrix, op: &'static str) -> Result<()> {
    if z.rows() != s.rows() {
        return Err(Error::dim(op, z.shape(), s.shape()));
    }
    if z.rows() < 4 {
        return Err(Error::TooFewRows { op, needed: 4, got: z.rows() });
    }
    Ok(())
}

/// Fully materialized statistics; O(n²) memory, intended for diagnostics.
pub fn distance_stats(z: &Matrix, s_onehot: &Matrix) -> Result<DistanceStats> {
    check_pair(z, s_onehot, "distance_stats")?;
    let a = double_center(&pairwise_euclidean(z)?);
    let b = double_center(&pairwise_euclidean(s_onehot)?);
    let n2 = (z.rows() * z.rows()) as f64;
    let mean_prod = |x: &Matrix, y: &Matrix| -> f64 {
        let v = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p * q).sum::<f64>() / n2;
        v.max(0.0)
    };
    Ok(DistanceStats {
        dcov2: mean_prod(&a, &b),
        dvar_z: mean_prod(&a, &a),
        dvar_s: mean_prod(&b, &b),
        a_centered: a,
        b_centered: b,
    })
}

/// Row means and grand mean of the pairwise distance matrix of `m`.
fn distance_means(m: &Matrix) -> (Vec<f64>, f64) {
    let n = m.rows();
    let mut row = vec![0.0; n];
    for j in 0..n {
        for k in j + 1..n {
            let v = row_distance(m.row(j), m.row(k));
            row[j] += v;
            row[k] += v;
        }
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= n as f64);
    (row, total / (n * n) as f64)
}

/// Squared distance covariance `V²(z, s)` and its gradient with respect to `z`.
///
/// Values below zero from rounding are clamped to zero, in which case the
/// gradient is zero as well. Coincident rows of `z` contribute a zero
/// subgradient.
pub fn dcov2_empirical(z: &Matrix, s_onehot: &Matrix) -> Result<(f64, Matrix)> {
    check_pair(z, s_onehot, "dcov2_empirical")?;
    let n = z.rows();
    let k = z.cols();
    let (b_row, b_grand) = distance_means(s_onehot);
    let n2 = (n * n) as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, k);
    let gdata = grad.as_mut_slice();
    for j in 0..n {
        let zj = z.row(j);
        let sj = s_onehot.row(j);
        for m in j + 1..n {
            let zm = z.row(m);
            let b = row_distance(sj, s_onehot.row(m)) - b_row[j] - b_row[m] + b_grand;
            let a = row_distance(zj, zm);
            total += 2.0 * a * b;
            if a > 0.0 {
                let coef = 2.0 * b / (n2 * a);
                for c in 0..k {
                    let g = coef * (zj[c] - zm[c]);
                    gdata[j * k + c] += g;
                    gdata[m * k + c] -= g;
                }
            }
        }
    }
    let value = total / n2;
    if !value.is_finite() {
        return Err(Error::NonFinite("dcov2_empirical".into()));
    }
    if value <= 0.0 {
        return Ok((0.0, Matrix::zeros(n, k)));
    }
    Ok((value, grad))
}

/// Distance correlation in `[0, 1]`; zero when either sample is constant.
///
/// Streams over pairs with O(n) memory, so it is usable on full test splits.
pub fn dcor(z: &Matrix, s_onehot: &Matrix) -> Result<f64> {
    check_pair(z, s_onehot, "dcor")?;
    let n = z.rows();
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for m in j + 1..n {
            let a = row_distance(z.row(j), z.row(m));
            let b = row_distance(s_onehot.row(j), s_onehot.row(m));
            ra[j] += a;
            ra[m] += a;
            rb[j] += b;
            rb[m] += b;
            saa += 2.0 * a * a;
            sbb += 2.0 * b * b;
            sab += 2.0 * a * b;
        }
    }
    let nf = n as f64;
    let ga = ra.iter().sum::<f64>() / (nf * nf);
    let gb = rb.iter().sum::<f64>() / (nf * nf);
    ra.iter_mut().for_each(|v| *v /= nf);
    rb.iter_mut().for_each(|v| *v /= nf);
    // Σ A·B = Σ a·b - 2n Σ_j ra_j rb_j + n² ga gb, likewise for A² and B²
    let cross = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
    let n2 = nf * nf;
    let dcov2 = ((sab - 2.0 * nf * cross(&ra, &rb) + n2 * ga * gb) / n2).max(0.0);
    let dvar_z = ((saa - 2.0 * nf * cross(&ra, &ra) + n2 * ga * ga) / n2).max(0.0);
    let dvar_s = ((sbb - 2.0 * nf * cross(&rb, &rb) + n2 * gb * gb) / n2).max(0.0);
    let denom = math::sqrt(dvar_z * dvar_s);
    if !(denom > 0.0) {
        return Ok(0.0);
    }
    Ok((dcov2 / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_examples() {
        let d = pairwise_euclidean(&Matrix::from_rows(&[[0.0], [3.0]])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 3.0, 3.0, 0.0]);
        let d = pairwise_euclidean(&Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]])).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        let d = pairwise_euclidean(&Matrix::filled(4, 3, 1.25)).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
        assert!(pairwise_euclidean(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn double_center_examples() {
        let c = double_center(&Matrix::filled(3, 3, 4.0));
        assert!(c.as_slice().iter().all(|v| v.abs() < 1e-15));

        let c = double_center(&Matrix::from_rows(&[[0.0, 6.0], [6.0, 0.0]]));
        assert_eq!(c.as_slice(), &[-3.0, 3.0, 3.0, -3.0]);
    }

    #[test]
    fn constant_sensitive_gives_zero() {
        let z = Matrix::from_rows(&[[0.1, 2.0], [1.0, -1.0], [3.0, 0.5], [-2.0, 0.0], [0.4, 0.4]]);
        let s = Matrix::from_rows(&[[1.0, 0.0]; 5]);
        let (v, g) = dcov2_empirical(&z, &s).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(dcor(&z, &s).unwrap(), 0.0);
        assert!(dcov2_empirical(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn streaming_agrees_with_materialized() {
        let z = Matrix::from_rows(&[[0.1, 2.0], [1.0, -1.0], [3.0, 0.5], [-2.0, 0.0], [0.4, 0.4], [1.5, 1.5]]);
        let s = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let stats = distance_stats(&z, &s).unwrap();
        let (v, _) = dcov2_empirical(&z, &s).unwrap();
        assert_abs_diff_eq!(v, stats.dcov2, epsilon = 1e-12);
        let r = dcor(&z, &s).unwrap();
        assert_abs_diff_eq!(r, stats.dcov2 / (stats.dvar_z * stats.dvar_s).sqrt(), epsilon = 1e-12);
        for j in 0..6 {
            let row: f64 = stats.a_centered.row(j).iter().sum();
            assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn dcor_of_affine_image_is_one() {
        let s = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        // z = 3 * s + 1 scaled isotropically so distances are proportional
        let z = s.map(|v| 3.0 * v + 1.0);
        assert_abs_diff_eq!(dcor(&z, &s).unwrap(), 1.0, epsilon = 1e-9);
    }
}
