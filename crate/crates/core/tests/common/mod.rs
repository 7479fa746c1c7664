//! Independent reference implementations used by the integration tests.
//! Everything here is written from the definitions with plain loops.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[-0.5, 0.5)`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform(rng)).collect()
}

pub fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for m in 1..dims.len() {
        s[m] = s[m - 1] * dims[m - 1];
    }
    s
}

fn multi_index(mut lin: usize, dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = lin % d;
            lin /= d;
            i
        })
        .collect()
}

/// Mode-`n` unfolding: row `i_n`, column runs over the other indices with
/// the lowest remaining mode fastest.
pub fn unfold(data: &[f64], dims: &[usize], mode: usize) -> DMatrix<f64> {
    let cols: usize = dims.iter().enumerate().filter(|(m, _)| *m != mode).map(|(_, d)| d).product();
    let mut out = DMatrix::zeros(dims[mode], cols);
    for (lin, &v) in data.iter().enumerate() {
        let idx = multi_index(lin, dims);
        let mut col = 0;
        let mut stride = 1;
        for m in 0..dims.len() {
            if m != mode {
                col += idx[m] * stride;
                stride *= dims[m];
            }
        }
        out[(idx[mode], col)] = v;
    }
    out
}

/// `t ×_mode u` for `u` of shape `J × I_mode`.
pub fn mode_product(data: &[f64], dims: &[usize], u: &DMatrix<f64>, mode: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out_dims = dims.to_vec();
    out_dims[mode] = u.nrows();
    let so = strides(&out_dims);
    let mut out = vec![0.0; out_dims.iter().product()];
    for (lin, &v) in data.iter().enumerate() {
        let idx = multi_index(lin, dims);
        let base: usize = idx.iter().enumerate().filter(|(m, _)| *m != mode).map(|(m, &i)| i * so[m]).sum();
        for j in 0..u.nrows() {
            out[base + j * so[mode]] += u[(j, idx[mode])] * v;
        }
    }
    (out, out_dims)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix, eigenpairs
/// sorted by descending eigenvalue.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Leading `r` left singular vectors via the Gram matrix.
pub fn leading_left(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (_, v) = jacobi_eigen(&(m * m.transpose()));
    v.columns(0, r).into_owned()
}

/// Plain HOOI of any order, updating modes in `order` each sweep.
/// Returns `½‖t − reconstruction‖²` after the HOSVD start and every sweep.
pub fn hooi(data: &[f64], dims: &[usize], ranks: &[usize], order: &[usize], sweeps: usize) -> Vec<f64> {
    let total: f64 = data.iter().map(|x| x * x).sum();
    let mut u: Vec<DMatrix<f64>> = (0..dims.len()).map(|m| leading_left(&unfold(data, dims, m), ranks[m])).collect();
    let project = |u: &[DMatrix<f64>], skip: Option<usize>| {
        let mut t = (data.to_vec(), dims.to_vec());
        for (m, um) in u.iter().enumerate() {
            if Some(m) != skip {
                t = mode_product(&t.0, &t.1, &um.transpose(), m);
            }
        }
        t
    };
    let objective = |u: &[DMatrix<f64>]| {
        let core = project(u, None).0;
        0.5 * (total - core.iter().map(|x| x * x).sum::<f64>())
    };
    let mut out = vec![objective(&u)];
    for _ in 0..sweeps {
        for &m in order {
            let (z, zd) = project(&u, Some(m));
            u[m] = leading_left(&unfold(&z, &zd, m), ranks[m]);
        }
        out.push(objective(&u));
    }
    out
}

/// Circular forward-difference matrix stacked as horizontal, vertical,
/// temporal, `3n × n`.
pub fn difference_matrix([h, w, d]: [usize; 3]) -> DMatrix<f64> {
    let n = h * w * d;
    let at = |i: usize, j: usize, k: usize| i + h * (j + w * k);
    let mut m = DMatrix::zeros(3 * n, n);
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                let r = at(i, j, k);
                for (part, next) in [at(i, (j + 1) % w, k), at((i + 1) % h, j, k), at(i, j, (k + 1) % d)].into_iter().enumerate() {
                    m[(part * n + r, next)] += 1.0;
                    m[(part * n + r, r)] -= 1.0;
                }
            }
        }
    }
    m
}

/// Dense solve of `(β_x0 I + β_f DᵀD) x = c`.
pub fn dense_tv_solve(c: &[f64], dims: [usize; 3], beta_x0: f64, beta_f: f64) -> Vec<f64> {
    let n = c.len();
    let d = difference_matrix(dims);
    let a = DMatrix::identity(n, n) * beta_x0 + d.transpose() * &d * beta_f;
    a.lu().solve(&DVector::from_column_slice(c)).expect("system is positive definite").as_slice().to_vec()
}

/// Unnormalised Sylvester Hadamard entry.
pub fn hadamard_sign(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// SSIM over every 8×8 window (stride 1), computed window by window.
pub fn ssim_windows(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let win = 8;
    let mut sum = 0.0;
    let mut count = 0;
    for j0 in 0..=w - win {
        for i0 in 0..=h - win {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for j in j0..j0 + win {
                for i in i0..i0 + win {
                    xs.push(a[i + h * j]);
                    ys.push(b[i + h * j]);
                }
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
            let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
            let cxy = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
            sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Random tensor `core ×ₙ Uₙ` with orthonormal factors and a decaying core.
pub fn planted_tucker(rng: &mut ChaCha8Rng, dims: &[usize], ranks: &[usize]) -> Vec<f64> {
    let core_len: usize = ranks.iter().product();
    let mut data: Vec<f64> = (0..core_len).map(|i| (1.0 + 4.0 * uniform(rng).abs()) * 10.0 / (1.0 + i as f64)).collect();
    let mut cur = ranks.to_vec();
    for m in 0..dims.len() {
        let g = DMatrix::from_fn(dims[m], ranks[m], |_, _| uniform(rng));
        let q = g.qr().q();
        let (d, nd) = mode_product(&data, &cur, &q, m);
        data = d;
        cur = nd;
    }
    data
}
