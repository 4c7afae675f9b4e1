//! Independent reference implementations and the randomized suites that
//! compare the library against them. Each suite returns the first
//! discrepancy it finds.

#![allow(dead_code)]

use fair4free_core::dcov::{dcov2_empirical, dcor};
use fair4free_core::distill::{distill_loss, student_loss_and_gradients, Pairing, StudentParams};
use fair4free_core::encoding::onehot;
use fair4free_core::eval::{demographic_parity_ratio, density_coverage, equalized_odds_ratio, utility_metrics};
use fair4free_core::fairvae::{heads_for, loss_and_gradients, GaussianLatent, TeacherParams};
use fair4free_core::numkernel::{affine_backward, affine_forward, gaussian_kl, gaussian_kl_backward};
use fair4free_core::{Matrix, ParamTensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---------------------------------------------------------------------------
// distance covariance

/// `(1/n²) Σ_jk A_jk B_jk` with both centered matrices built explicitly.
pub fn naive_dcov2(z: &[Vec<f64>], s: &[Vec<f64>]) -> f64 {
    let n = z.len();
    let centered = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let d: Vec<Vec<f64>> = rows
            .iter()
            .map(|a| rows.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).collect())
            .collect();
        let row_mean: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let col_mean: Vec<f64> = (0..n).map(|k| d.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
        let grand = row_mean.iter().sum::<f64>() / n as f64;
        (0..n).map(|j| (0..n).map(|k| d[j][k] - row_mean[j] - col_mean[k] + grand).collect()).collect()
    };
    let a = centered(z);
    let b = centered(s);
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            acc += a[j][k] * b[j][k];
        }
    }
    acc / (n * n) as f64
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn random_sensitive(n: usize, levels: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Matrix) {
    let s: Vec<usize> = (0..n).map(|_| rng.random_range(0..levels)).collect();
    let m = onehot(s.iter().copied(), levels);
    (s, m)
}

/// Streaming estimator against the explicit formula on `instances` random
/// problems with `n ≤ 50`.
pub fn dcov_matches_naive(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let n = rng.random_range(4..=50);
        let k = rng.random_range(1..=4);
        let levels = rng.random_range(2..=3);
        let z = normal_matrix(n, k, &mut rng);
        let (_, s) = random_sensitive(n, levels, &mut rng);
        let (v, _) = dcov2_empirical(&z, &s).map_err(|e| e.to_string())?;
        let naive = naive_dcov2(&rows_of(&z), &rows_of(&s));
        if (v - naive).abs() > 1e-10 {
            return Err(format!("instance {i} (n={n}, k={k}): {v} vs naive {naive}"));
        }
    }
    // z equal to the one-hot codes of a random binary s
    let (_, s) = random_sensitive(8, 2, &mut rng);
    let (v, _) = dcov2_empirical(&s, &s).map_err(|e| e.to_string())?;
    let naive = naive_dcov2(&rows_of(&s), &rows_of(&s));
    if (v - naive).abs() > 1e-10 {
        return Err(format!("z = s: {v} vs naive {naive}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// KL divergence

/// Monte-Carlo `E_q[log q(x) - log p(x)]`, summed over entries.
pub fn monte_carlo_kl(mu: &Matrix, logvar: &Matrix, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 0.0;
    for (&m, &lv) in mu.as_slice().iter().zip(logvar.as_slice()) {
        let sd = (0.5 * lv).exp();
        let mut acc = 0.0;
        for _ in 0..draws {
            let e: f64 = rng.sample(StandardNormal);
            let x = m + sd * e;
            // log q - log p, the 2π terms cancel
            acc += -0.5 * lv - 0.5 * e * e + 0.5 * x * x;
        }
        total += acc / draws as f64;
    }
    total
}

pub fn kl_matches_monte_carlo(instances: usize, draws: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let rows = rng.random_range(1..=3);
        let cols = rng.random_range(1..=3);
        let mu = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
        let lv = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let exact = gaussian_kl(&mu, &lv).map_err(|e| e.to_string())?;
        let mc = monte_carlo_kl(&mu, &lv, draws, &mut rng);
        if (exact - mc).abs() > 0.02 * exact.abs() {
            return Err(format!("instance {i}: closed form {exact}, Monte Carlo {mc}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// density and coverage

/// Direct transcription of the definitions over all `n·m` pairs.
pub fn naive_density_coverage(real: &[Vec<f64>], synth: &[Vec<f64>], k: usize) -> (f64, f64) {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
    let radius: Vec<f64> = real
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut d: Vec<f64> = real.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| sq(a, b)).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let mut hits = 0usize;
    for s in synth {
        for (r, rad) in real.iter().zip(&radius) {
            if sq(s, r) <= *rad {
                hits += 1;
            }
        }
    }
    let covered = real.iter().zip(&radius).filter(|(r, rad)| synth.iter().any(|s| sq(s, r) <= **rad)).count();
    (hits as f64 / (k * synth.len()) as f64, covered as f64 / real.len() as f64)
}

fn integer_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-3..=3) as f64).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Exact agreement, including instances on an integer grid where ties at
/// the ball boundary are common.
pub fn density_coverage_matches_naive(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let k = rng.random_range(1..=7);
        let n = rng.random_range(k + 1..=200);
        let m = rng.random_range(k + 1..=200);
        let d = rng.random_range(1..=4);
        let (real, synth) = if i % 2 == 0 {
            let shift = rng.random_range(0.0..2.0);
            (normal_matrix(n, d, &mut rng), normal_matrix(m, d, &mut rng).map(|v| v + shift))
        } else {
            (integer_matrix(n, d, &mut rng), integer_matrix(m, d, &mut rng))
        };
        let got = density_coverage(&real, &synth, k).map_err(|e| e.to_string())?;
        let want = naive_density_coverage(&rows_of(&real), &rows_of(&synth), k);
        if got != want {
            return Err(format!("instance {i} (n={n}, m={m}, k={k}): {got:?} vs naive {want:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// finite differences

const STEP: f64 = 1e-5;

fn central(f: &mut dyn FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

fn compare(what: &str, analytic: f64, numeric: f64, tol: f64) -> Check {
    let e = rel_err(analytic, numeric);
    if e < tol {
        Ok(())
    } else {
        Err(format!("{what}: analytic {analytic:e}, numeric {numeric:e}, relative error {e:e}"))
    }
}

/// Weighted sum `Σ w ⊙ out` turns a matrix-valued op into a scalar loss whose
/// upstream gradient is `w`.
fn weighted(out: &Matrix, w: &Matrix) -> f64 {
    out.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
}

fn affine_gradients(rng: &mut ChaCha8Rng) -> Check {
    let (b, i, o) = (3, 2, 2);
    let x = normal_matrix(b, i, rng);
    let w = normal_matrix(i, o, rng);
    let bias = normal_matrix(1, o, rng);
    let up = normal_matrix(b, o, rng);
    let (dx, dw, db) = affine_backward(&up, &x, &w).map_err(|e| e.to_string())?;
    for (name, target, grad) in [("x", &x, &dx), ("w", &w, &dw), ("b", &bias, &db)] {
        for idx in 0..target.as_slice().len() {
            let mut f = |v: f64| {
                let (mut x2, mut w2, mut b2) = (x.clone(), w.clone(), bias.clone());
                match name {
                    "x" => x2.as_mut_slice()[idx] = v,
                    "w" => w2.as_mut_slice()[idx] = v,
                    _ => b2.as_mut_slice()[idx] = v,
                }
                weighted(&affine_forward(&x2, &w2, &b2).unwrap(), &up)
            };
            let numeric = central(&mut f, target.as_slice()[idx]);
            compare(&format!("affine d{name}[{idx}]"), grad.as_slice()[idx], numeric, 1e-4)?;
        }
    }
    Ok(())
}

fn kl_gradients(rng: &mut ChaCha8Rng) -> Check {
    let mu = normal_matrix(3, 2, rng);
    let lv = normal_matrix(3, 2, rng).map(|v| 0.5 * v);
    let scale = 0.7;
    let (dmu, dlv) = gaussian_kl_backward(&mu, &lv, scale);
    for idx in 0..6 {
        let mut f = |v: f64| {
            let mut m = mu.clone();
            m.as_mut_slice()[idx] = v;
            scale * gaussian_kl(&m, &lv).unwrap()
        };
        compare(&format!("kl dmu[{idx}]"), dmu.as_slice()[idx], central(&mut f, mu.as_slice()[idx]), 1e-4)?;
        let mut f = |v: f64| {
            let mut l = lv.clone();
            l.as_mut_slice()[idx] = v;
            scale * gaussian_kl(&mu, &l).unwrap()
        };
        compare(&format!("kl dlogvar[{idx}]"), dlv.as_slice()[idx], central(&mut f, lv.as_slice()[idx]), 1e-4)?;
    }
    Ok(())
}

fn dcov_gradients(rng: &mut ChaCha8Rng) -> Check {
    let z = normal_matrix(6, 2, rng);
    let (_, s) = random_sensitive(6, 2, rng);
    let s = if s.column(0).iter().all(|&v| v == s.get(0, 0)) {
        onehot([0, 1, 0, 1, 1, 0].into_iter(), 2)
    } else {
        s
    };
    let (_, grad) = dcov2_empirical(&z, &s).map_err(|e| e.to_string())?;
    for idx in 0..12 {
        let mut f = |v: f64| {
            let mut z2 = z.clone();
            z2.as_mut_slice()[idx] = v;
            dcov2_empirical(&z2, &s).unwrap().0
        };
        compare(&format!("dcov dz[{idx}]"), grad.as_slice()[idx], central(&mut f, z.as_slice()[idx]), 1e-4)?;
    }
    Ok(())
}

fn distill_gradients(rng: &mut ChaCha8Rng) -> Check {
    for pairing in [Pairing::Direct, Pairing::Sorted] {
        let mut params = StudentParams::init(3, rng.random());
        let b = 5;
        let noise = normal_matrix(b, params.noise_dim, rng);
        let eps = normal_matrix(b, 3, rng);
        let z = normal_matrix(b, 3, rng);
        let loss = |p: &mut StudentParams| student_loss_and_gradients(p, &z, &noise, &eps, pairing).unwrap().total;
        loss(&mut params);
        let snapshot = params.clone();
        for t in 0..4 {
            let len = student_tensors(&mut snapshot.clone())[t].value.as_slice().len();
            for idx in (0..len).step_by(7) {
                let analytic = student_tensors(&mut snapshot.clone())[t].grad.as_slice()[idx];
                let mut f = |v: f64| {
                    let mut p = snapshot.clone();
                    student_tensors(&mut p)[t].value.as_mut_slice()[idx] = v;
                    loss(&mut p)
                };
                let x = student_tensors(&mut snapshot.clone())[t].value.as_slice()[idx];
                compare(&format!("student {pairing:?} tensor {t}[{idx}]"), analytic, central(&mut f, x), 1e-4)?;
            }
        }
    }
    Ok(())
}

pub fn student_tensors(p: &mut StudentParams) -> [&mut ParamTensor; 4] {
    [&mut p.hidden.weight, &mut p.hidden.bias, &mut p.out.weight, &mut p.out.bias]
}

/// Analytic gradients of the kernel operations against central differences.
pub fn kernel_gradients_match(seed: u64) -> Check {
    let mut rng = rng(seed);
    affine_gradients(&mut rng)?;
    kl_gradients(&mut rng)?;
    dcov_gradients(&mut rng)?;
    distill_gradients(&mut rng)
}

/// A small mixed-type encoding state for teacher-level checks.
pub fn toy_teacher(seed: u64) -> (TeacherParams, Matrix, Matrix, Matrix) {
    use fair4free_core::encoding::{EncodingState, FeatureSlot, SlotKind};
    let state = EncodingState {
        slots: vec![
            FeatureSlot { column: 0, offset: 0, kind: SlotKind::Numeric { mean: 0.0, std: 1.0 }, domain: None },
            FeatureSlot { column: 1, offset: 1, kind: SlotKind::Categorical { levels: 3 }, domain: None },
            FeatureSlot { column: 2, offset: 4, kind: SlotKind::Numeric { mean: 0.0, std: 1.0 }, domain: None },
        ],
        sensitive_column: 3,
        target_column: 4,
        sensitive_levels: 2,
        sensitive_counts: vec![8, 8],
    };
    let params = TeacherParams::init(&state, 4, 12, seed);
    assert_eq!(params.heads, heads_for(&state));
    let mut rng = rng(seed ^ 0xabc);
    let b = 16;
    let mut x = Matrix::zeros(b, state.output_width());
    for r in 0..b {
        let row = x.row_mut(r);
        row[0] = rng.sample(StandardNormal);
        row[1 + rng.random_range(0..3)] = 1.0;
        row[4] = rng.sample(StandardNormal);
        row[5 + rng.random_range(0..2)] = 1.0;
    }
    let s = onehot((0..b).map(|i| i % 2), 2);
    let eps = normal_matrix(b, 4, &mut rng);
    (params, x, s, eps)
}

/// Gradient of the full teacher objective with respect to 20 randomly chosen
/// parameters on a 16-row batch.
pub fn teacher_gradient_matches(seed: u64) -> Check {
    let (mut params, x, s, eps) = toy_teacher(seed);
    let beta = 9.0;
    params.zero_grad();
    loss_and_gradients(&mut params, &x, &s, &eps, beta).map_err(|e| e.to_string())?;
    let snapshot = params.clone();
    let sizes: Vec<usize> = params.tensors_mut().iter().map(|t| t.value.as_slice().len()).collect();
    let mut rng = rng(seed ^ 0x5eed);
    for _ in 0..20 {
        let t = rng.random_range(0..sizes.len());
        let idx = rng.random_range(0..sizes[t]);
        let mut probe = snapshot.clone();
        let analytic = probe.tensors_mut()[t].grad.as_slice()[idx];
        let x0 = probe.tensors_mut()[t].value.as_slice()[idx];
        let mut f = |v: f64| {
            let mut p = snapshot.clone();
            p.tensors_mut()[t].value.as_mut_slice()[idx] = v;
            p.zero_grad();
            loss_and_gradients(&mut p, &x, &s, &eps, beta).unwrap().total
        };
        compare(&format!("teacher tensor {t}[{idx}]"), analytic, central(&mut f, x0), 1e-3)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fairness and utility metrics

fn close(what: &str, got: f64, want: f64) -> Check {
    if (got - want).abs() < 1e-12 {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, expected {want}"))
    }
}

/// Hand-worked metric examples.
pub fn metric_examples() -> Check {
    let dpr_cases: &[(&[u8], &[usize], f64)] = &[
        // positive rates 0.4 and 0.4
        (&[1, 1, 0, 0, 0, 1, 1, 0, 0, 0], &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 1.0),
        // 0.2 and 0.4
        (&[1, 0, 0, 0, 0, 1, 1, 0, 0, 0], &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 0.5),
        (&[0, 0, 0, 0], &[0, 0, 1, 1], 1.0),
    ];
    for (i, (yhat, s, want)) in dpr_cases.iter().enumerate() {
        close(&format!("dpr case {i}"), demographic_parity_ratio(yhat, s, 2).map_err(|e| e.to_string())?, *want)?;
    }
    let eor_cases: &[(&[u8], &[u8], &[usize], f64)] = &[
        (&[1, 0, 1, 0], &[1, 0, 1, 0], &[0, 0, 1, 1], 1.0),
        (&[1, 1, 0, 0, 1, 1, 0, 0], &[1, 0, 1, 0, 1, 0, 1, 0], &[0, 0, 0, 0, 1, 1, 1, 1], 1.0),
        // TPR 0.5 vs 1.0, FPR 0 in both
        (&[1, 0, 0, 1, 1, 0], &[1, 1, 0, 1, 1, 0], &[0, 0, 0, 1, 1, 1], 0.5),
    ];
    for (i, (yhat, y, s, want)) in eor_cases.iter().enumerate() {
        close(&format!("eor case {i}"), equalized_odds_ratio(yhat, y, s, 2).map_err(|e| e.to_string())?, *want)?;
    }
    let util_cases: &[(&[u8], &[u8], [f64; 3])] = &[
        (&[1, 0, 1], &[1, 0, 1], [1.0, 1.0, 1.0]),
        (&[1, 0], &[1, 1], [0.5, 0.5, 2.0 / 3.0]),
        (&[0, 0, 0, 0], &[1, 0, 1, 0], [0.5, 0.0, 0.0]),
    ];
    for (i, (yhat, y, want)) in util_cases.iter().enumerate() {
        let u = utility_metrics(yhat, y).map_err(|e| e.to_string())?;
        close(&format!("utility case {i} accuracy"), u.accuracy, want[0])?;
        close(&format!("utility case {i} recall"), u.recall, want[1])?;
        close(&format!("utility case {i} f1"), u.f1, want[2])?;
    }
    Ok(())
}

/// Bounds and group-relabeling invariance over random instances in which
/// every group holds both label values.
pub fn metric_properties(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let groups = rng.random_range(2..=4);
        let n = rng.random_range(4 * groups..=60);
        let mut s: Vec<usize> = (0..n).map(|j| j % groups).collect();
        s.shuffle(&mut rng);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        for g in 0..groups {
            let mut members = (0..n).filter(|&j| s[j] == g);
            y[members.next().unwrap()] = 0;
            y[members.next().unwrap()] = 1;
        }
        let p_one = rng.random_range(0.0..1.0);
        let yhat: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(p_one))).collect();

        let dpr = demographic_parity_ratio(&yhat, &s, groups).map_err(|e| format!("instance {i}: {e}"))?;
        let eor = equalized_odds_ratio(&yhat, &y, &s, groups).map_err(|e| format!("instance {i}: {e}"))?;
        let u = utility_metrics(&yhat, &y).map_err(|e| format!("instance {i}: {e}"))?;
        for (name, v) in [("dpr", dpr), ("eor", eor), ("accuracy", u.accuracy), ("recall", u.recall), ("f1", u.f1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("instance {i}: {name} = {v} outside [0, 1]"));
            }
        }
        let mut relabel: Vec<usize> = (0..groups).collect();
        relabel.shuffle(&mut rng);
        let s2: Vec<usize> = s.iter().map(|&g| relabel[g]).collect();
        let dpr2 = demographic_parity_ratio(&yhat, &s2, groups).map_err(|e| e.to_string())?;
        let eor2 = equalized_odds_ratio(&yhat, &y, &s2, groups).map_err(|e| e.to_string())?;
        if dpr != dpr2 || eor != eor2 {
            return Err(format!("instance {i}: relabeling {relabel:?} moved ({dpr}, {eor}) to ({dpr2}, {eor2})"));
        }
    }
    Ok(())
}

/// Density and coverage bounds on random instances.
pub fn quality_bounds(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let n = rng.random_range(6..40);
        let m = rng.random_range(6..40);
        let real = normal_matrix(n, 2, &mut rng);
        let spread = rng.random_range(0.2..3.0);
        let synth = normal_matrix(m, 2, &mut rng).map(|v| v * spread);
        let (d, c) = density_coverage(&real, &synth, 5).map_err(|e| e.to_string())?;
        if d < 0.0 || !(0.0..=1.0).contains(&c) {
            return Err(format!("instance {i}: density {d}, coverage {c}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// misc invariants shared with property tests

pub fn dcor_in_unit_interval(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for i in 0..instances {
        let n = rng.random_range(4..30);
        let z = normal_matrix(n, 3, &mut rng);
        let (_, s) = random_sensitive(n, 2, &mut rng);
        let r = dcor(&z, &s).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&r) {
            return Err(format!("instance {i}: dcor {r}"));
        }
    }
    Ok(())
}

/// Sorted pairing ignores any row order of either batch.
pub fn sorted_pairing_ignores_order(z: &Matrix, zs: &Matrix, perm_a: &[usize], perm_b: &[usize]) -> Check {
    let lat = GaussianLatent { mu: Matrix::zeros(zs.rows(), zs.cols()), logvar: Matrix::zeros(zs.rows(), zs.cols()) };
    let base = distill_loss(z, zs, &lat, Pairing::Sorted).map_err(|e| e.to_string())?.distillation;
    let moved = distill_loss(&z.select_rows(perm_a), &zs.select_rows(perm_b), &lat, Pairing::Sorted)
        .map_err(|e| e.to_string())?
        .distillation;
    if (base - moved).abs() > 1e-12 * base.abs().max(1.0) {
        return Err(format!("sorted distillation term changed from {base} to {moved}"));
    }
    Ok(())
}
