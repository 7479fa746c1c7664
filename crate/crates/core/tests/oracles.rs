mod common;

use common::*;
use nalgebra::DMatrix;
use tenrpca::compressive::fwht;
use tenrpca::linalg::{hooi3, joint_hooi, top_eigenvectors, top_singular_vectors, GroupRanks, SweepControl};
use tenrpca::metrics::ssim;
use tenrpca::tv::{diff, diff_adjoint, solve_x2, DiffField, TvSolver};
use tenrpca::DenseTensor;

fn fixed(sweeps: usize) -> SweepControl {
    SweepControl { sweeps, tol: 0.0 }
}

#[test]
fn unfolding_matches_definition() {
    let mut r = rng(1);
    for dims in [vec![3, 4, 2], vec![2, 3, 4, 5]] {
        let data = random_vec(&mut r, dims.iter().product());
        let t = DenseTensor::from_vec(&dims, data.clone()).unwrap();
        for m in 0..dims.len() {
            assert_eq!(t.unfold(m).unwrap(), unfold(&data, &dims, m));
        }
    }
}

#[test]
fn mode_products_match_definition() {
    let mut r = rng(2);
    let dims = [3, 4, 2, 3];
    let data = random_vec(&mut r, 72);
    let t = DenseTensor::from_vec(&dims, data.clone()).unwrap();
    for m in 0..4 {
        let u = DMatrix::from_fn(5, dims[m], |_, _| uniform(&mut r));
        let (want, wd) = mode_product(&data, &dims, &u, m);
        let got = t.mode_mul(&u, m).unwrap();
        assert_eq!(got.dims(), &wd[..]);
        assert!(rel_err(got.data(), &want) < 1e-13);
    }
}

#[test]
fn eigenvectors_match_jacobi() {
    let mut r = rng(3);
    for n in [3, 6, 11] {
        let g = DMatrix::from_fn(n, n + 2, |_, _| uniform(&mut r));
        let sym = &g * g.transpose();
        let (_, v) = jacobi_eigen(&sym);
        let k = n / 2 + 1;
        let u = top_eigenvectors(&sym, k).unwrap();
        for c in 0..k {
            let (col, want) = (u.column(c), v.column(c));
            let s = if col.dot(&want) < 0.0 { -1.0 } else { 1.0 };
            assert!((col - want * s).amax() < 1e-9);
            let peak = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(peak >= 0.0);
        }
        let left = top_singular_vectors(&g, k).unwrap();
        assert!((&left * left.transpose() - &u * u.transpose()).amax() < 1e-9);
    }
}

#[test]
fn hooi3_objectives_match_reference() {
    let mut r = rng(4);
    for _ in 0..5 {
        let dims = [6, 5, 4];
        let mut data = planted_tucker(&mut r, &dims, &[3, 2, 2]);
        for v in data.iter_mut() {
            *v += 0.05 * uniform(&mut r);
        }
        let total: f64 = data.iter().map(|x| x * x).sum();
        let want = hooi(&data, &dims, &[3, 2, 2], &[0, 1, 2], 4);
        let fit = hooi3(&DenseTensor::from_vec(&dims, data).unwrap(), [3, 2, 2], fixed(4)).unwrap();
        for (g, w) in fit.objectives.iter().zip(&want) {
            assert!((0.5 * g * g - w).abs() <= 1e-9 * total, "{g} vs {w}");
        }
    }
}

#[test]
fn joint_hooi_on_one_cluster_matches_order_four_hooi() {
    let mut r = rng(5);
    let dims = [4, 4, 5, 6];
    let ranks = [2, 3, 2, 3];
    let mut data = planted_tucker(&mut r, &dims, &ranks);
    for v in data.iter_mut() {
        *v += 0.02 * uniform(&mut r);
    }
    let total: f64 = data.iter().map(|x| x * x).sum();
    let want = hooi(&data, &dims, &ranks, &[0, 1, 3, 2], 6);
    let t = DenseTensor::from_vec(&dims, data).unwrap();
    let gr = GroupRanks { rows: 2, cols: 3, temporal: 2, group: 3 };
    let fit = joint_hooi(&[t], gr, fixed(6)).unwrap();
    assert_eq!(fit.objectives.len(), want.len());
    for (g, w) in fit.objectives.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-9 * total, "{g} vs {w}");
    }
}

#[test]
fn diff_matches_dense_matrix() {
    let mut r = rng(6);
    let dims = [3, 4, 2];
    let x = random_vec(&mut r, 24);
    let d = difference_matrix(dims);
    let want = &d * nalgebra::DVector::from_column_slice(&x);
    let got = diff(&DenseTensor::from_vec(&dims, x).unwrap()).unwrap();
    let stacked: Vec<f64> = got.parts().iter().flat_map(|p| p.iter().cloned()).collect();
    assert!(rel_err(&stacked, want.as_slice()) < 1e-14);

    let g = random_vec(&mut r, 72);
    let field = DiffField {
        horizontal: g[..24].to_vec(),
        vertical: g[24..48].to_vec(),
        temporal: g[48..].to_vec(),
        dims,
    };
    let want = d.transpose() * nalgebra::DVector::from_column_slice(&g);
    assert!(rel_err(diff_adjoint(&field).unwrap().data(), want.as_slice()) < 1e-14);
}

#[test]
fn tv_solve_matches_dense_solve_on_odd_shapes() {
    let mut r = rng(7);
    for dims in [[3, 5, 2], [1, 4, 3], [5, 1, 1], [2, 2, 7]] {
        let n = dims.iter().product();
        let c = random_vec(&mut r, n);
        let (bx0, bf) = (0.1 + uniform(&mut r).abs(), 0.1 + 3.0 * uniform(&mut r).abs());
        let got = solve_x2(&DenseTensor::from_vec(&dims, c.clone()).unwrap(), bx0, bf, &TvSolver::new(dims)).unwrap();
        assert!(rel_err(got.data(), &dense_tv_solve(&c, dims, bx0, bf)) < 1e-10, "{dims:?}");
    }
}

#[test]
fn fwht_matches_dense_hadamard() {
    let mut r = rng(8);
    for n in [1, 2, 8, 32] {
        let x = random_vec(&mut r, n);
        let want: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| hadamard_sign(i, j) * x[j]).sum::<f64>() / (n as f64).sqrt())
            .collect();
        assert!(rel_err(&fwht(&x).unwrap(), &want) < 1e-13);
    }
}

#[test]
fn ssim_matches_windowed_definition() {
    let mut r = rng(9);
    for (h, w) in [(8, 8), (12, 10), (9, 17)] {
        let a: Vec<f64> = (0..h * w).map(|_| 128.0 + 200.0 * uniform(&mut r)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 30.0 * uniform(&mut r)).collect();
        let got = ssim(&a, &b, h, w).unwrap();
        assert!((got - ssim_windows(&a, &b, h, w)).abs() < 1e-10);
    }
}
