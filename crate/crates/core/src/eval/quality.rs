//! Sample-quality measures: kNN density and coverage, and energy distance.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numkernel::{math, Matrix};

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from every real row to its `k`-th nearest other real row.
pub fn knn_radii_sq(real: &Matrix, k: usize) -> Result<Vec<f64>> {
    let n = real.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::TooFewRows { op: "density_coverage", needed: k + 1, got: n });
    }
    let mut radii = Vec::with_capacity(n);
    // k smallest distances kept sorted ascending
    let mut best = Vec::with_capacity(k + 1);
    for i in 0..n {
        best.clear();
        let ri = real.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = sq_dist(ri, real.row(j));
            if best.len() < k || d < best[k - 1] {
                let at = best.partition_point(|&b| b <= d);
                best.insert(at, d);
                best.truncate(k);
            }
        }
        radii.push(best[k - 1]);
    }
    Ok(radii)
}

/// Number of real balls containing each synthetic row in `synth`, and a flag
/// per real row marking whether any synthetic row fell in its ball.
pub fn ball_hits(real: &Matrix, radii_sq: &[f64], synth: &Matrix, covered: &mut [bool]) -> usize {
    let mut hits = 0;
    for s in 0..synth.rows() {
        let row = synth.row(s);
        for (r, &rad) in radii_sq.iter().enumerate() {
            if sq_dist(row, real.row(r)) <= rad {
                hits += 1;
                covered[r] = true;
            }
        }
    }
    hits
}

/// `(density, coverage)` of `synth` relative to the k-NN balls of `real`.
///
/// density is `(1 / (k m)) Σ_s #{real balls containing s}` for `m` synthetic
/// rows; coverage is the fraction of real balls containing a synthetic row.
pub fn density_coverage(real: &Matrix, synth: &Matrix, k: usize) -> Result<(f64, f64)> {
    if real.cols() != synth.cols() {
        return Err(Error::dim("density_coverage", real.shape(), synth.shape()));
    }
    if synth.rows() < k + 1 {
        return Err(Error::TooFewRows { op: "density_coverage", needed: k + 1, got: synth.rows() });
    }
    let radii = knn_radii_sq(real, k)?;
    let mut covered = alloc::vec![false; real.rows()];
    let hits = ball_hits(real, &radii, synth, &mut covered);
    Ok(finish_density_coverage(hits, &covered, k, synth.rows()))
}

pub fn finish_density_coverage(hits: usize, covered: &[bool], k: usize, m: usize) -> (f64, f64) {
    let density = hits as f64 / (k * m) as f64;
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
    (density, coverage)
}

fn mean_cross_distance(a: &Matrix, b: &Matrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            acc += math::sqrt(sq_dist(a.row(i), b.row(j)));
        }
    }
    acc / (a.rows() * b.rows()) as f64
}

fn mean_within_distance(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += math::sqrt(sq_dist(a.row(i), a.row(j)));
        }
    }
    2.0 * acc / (n * (n - 1)) as f64
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|`, with the within-sample
/// terms estimated over distinct pairs.
pub fn energy_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::dim("energy_distance", a.shape(), b.shape()));
    }
    for m in [a, b] {
        if m.rows() < 2 {
            return Err(Error::TooFewRows { op: "energy_distance", needed: 2, got: m.rows() });
        }
    }
    Ok(2.0 * mean_cross_distance(a, b) - mean_within_distance(a) - mean_within_distance(b))
}
