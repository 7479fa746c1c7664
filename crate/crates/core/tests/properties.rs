mod common;

use proptest::prelude::*;
use tenrpca::compressive::{CompressiveOperator, SensingMode};
use tenrpca::io::{read_volume, write_volume};
use tenrpca::linalg::{hooi3, SweepControl};
use tenrpca::metrics::{binarize, f_measure, psnr, Binarization, ForegroundMask, PsnrMode};
use tenrpca::patch::{extract_origins, gather_all, knn_cluster, scatter_average, PatchGeometry};
use tenrpca::tensor::dot;
use tenrpca::tv::{diff, diff_adjoint, soft_shrink, tv_norm, TvSolver};
use tenrpca::DenseTensor;

fn unit() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

fn volume(max: usize) -> impl Strategy<Value = DenseTensor> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(h, w, d)| {
        prop::collection::vec(unit(), h * w * d).prop_map(move |v| DenseTensor::from_vec(&[h, w, d], v).unwrap())
    })
}

fn pair(max: usize) -> impl Strategy<Value = (DenseTensor, DenseTensor)> {
    volume(max).prop_flat_map(|a| {
        let dims = a.dims().to_vec();
        let n = a.len();
        prop::collection::vec(unit(), n).prop_map(move |v| (a.clone(), DenseTensor::from_vec(&dims, v).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(t in volume(5), mode in 0usize..3) {
        let back = DenseTensor::fold(&t.unfold(mode).unwrap(), mode, t.dims()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn mode_products_on_distinct_modes_commute(t in volume(4), seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let a = nalgebra::DMatrix::from_fn(3, t.dims()[0], |_, _| common::uniform(&mut r));
        let b = nalgebra::DMatrix::from_fn(2, t.dims()[2], |_, _| common::uniform(&mut r));
        let x = t.mode_mul(&a, 0).unwrap().mode_mul(&b, 2).unwrap();
        let y = t.mode_mul(&b, 2).unwrap().mode_mul(&a, 0).unwrap();
        prop_assert!(common::rel_err(x.data(), y.data()) < 1e-12 || x.fro_norm() < 1e-12);
    }

    #[test]
    fn difference_adjoint_identity((x, y) in pair(5)) {
        let dx = diff(&x).unwrap();
        let dy = diff(&y).unwrap();
        let lhs = dx.inner(&dy);
        let rhs = dot(x.data(), diff_adjoint(&dy).unwrap().data());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + dx.norm() * dy.norm()));
    }

    #[test]
    fn tv_is_blind_to_constants(x in volume(5), c in -50.0f64..50.0) {
        let shifted = DenseTensor::from_vec(x.dims(), x.data().iter().map(|v| v + c).collect()).unwrap();
        prop_assert!((tv_norm(&x).unwrap() - tv_norm(&shifted).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tv_solve_satisfies_its_normal_equation(c in volume(5), bx0 in 0.01f64..10.0, bf in 0.01f64..10.0) {
        let dims = [c.dims()[0], c.dims()[1], c.dims()[2]];
        let x = TvSolver::new(dims).solve(c.data(), bx0, bf).unwrap();
        let xt = DenseTensor::from_vec(&dims, x.clone()).unwrap();
        let dtd = diff_adjoint(&diff(&xt).unwrap()).unwrap();
        let lhs: Vec<f64> = x.iter().zip(dtd.data()).map(|(a, b)| bx0 * a + bf * b).collect();
        prop_assert!(common::rel_err(&lhs, c.data()) < 1e-9 || c.fro_norm() < 1e-12);
    }

    #[test]
    fn soft_shrink_is_the_l1_prox(v in prop::collection::vec(-5.0f64..5.0, 1..20), tau in 0.0f64..3.0, probe in -5.0f64..5.0, at in 0usize..20) {
        let s = soft_shrink(&v, tau);
        let i = at % v.len();
        let cost = |z: f64| 0.5 * (z - v[i]).powi(2) + tau * z.abs();
        prop_assert!(cost(s[i]) <= cost(probe) + 1e-12);
        prop_assert!(s[i].abs() <= v[i].abs());
    }

    #[test]
    fn operator_adjoint_identity(
        h in 1usize..9, w in 1usize..9, d in 1usize..4,
        ratio in 0.05f64..=1.0, seed in any::<u64>(), holistic in any::<bool>(),
    ) {
        let mode = if holistic { SensingMode::Holistic } else { SensingMode::FrameWise };
        let op = CompressiveOperator::new(mode, [h, w, d], ratio, seed).unwrap();
        let mut r = common::rng(seed ^ 1);
        let x = common::random_vec(&mut r, h * w * d);
        let y = common::random_vec(&mut r, op.measurements());
        let lhs = dot(&op.apply(&x).unwrap().values, &y);
        let rhs = dot(&x, &op.adjoint_values(&y).unwrap());
        let scale = tenrpca::tensor::norm(&x) * tenrpca::tensor::norm(&y);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        // the sensing matrix has unit-norm-or-less rows, so A is non-expansive
        prop_assert!(tenrpca::tensor::norm(&op.apply(&x).unwrap().values) <= tenrpca::tensor::norm(&x) * (1.0 + 1e-12));
    }

    #[test]
    fn operator_is_a_function_of_its_descriptor(h in 1usize..7, w in 1usize..7, d in 1usize..4, ratio in 0.05f64..=1.0, seed in any::<u64>()) {
        let a = CompressiveOperator::new(SensingMode::FrameWise, [h, w, d], ratio, seed).unwrap();
        let b = CompressiveOperator::from_descriptor(a.descriptor()).unwrap();
        let x: Vec<f64> = (0..h * w * d).map(|i| (i as f64 * 0.37).sin()).collect();
        prop_assert_eq!(a.apply(&x).unwrap().values, b.apply(&x).unwrap().values);
    }

    #[test]
    fn scatter_average_inverts_gather(
        h in 4usize..14, w in 4usize..14, d in 1usize..3, patch in 2usize..5, step_off in 0usize..3, seed in any::<u64>(),
    ) {
        let patch = patch.min(h).min(w);
        let step = (patch - step_off.min(patch - 1)).max(1);
        let geom = PatchGeometry { patch, step, window: 6, group: 5 };
        let mut r = common::rng(seed);
        let x = DenseTensor::from_vec(&[h, w, d], common::random_vec(&mut r, h * w * d)).unwrap();
        let origins = extract_origins([h, w, d], &geom).unwrap();
        let c = knn_cluster(&x, &origins, &geom).unwrap();
        let back = scatter_average(&gather_all(&x, &c).unwrap(), &c).unwrap();
        prop_assert!(common::rel_err(back.data(), x.data()) < 1e-12);
        for cl in &c.clusters {
            prop_assert!(cl.len() <= geom.group);
        }
    }

    #[test]
    fn hooi_never_beats_the_residual_floor(t in volume(5), r in 1usize..3) {
        let ranks = [r.min(t.dims()[0]), r.min(t.dims()[1]), 1];
        let fit = hooi3(&t, ranks, SweepControl::STANDALONE).unwrap();
        let rec = fit.model.reconstruct();
        let res = tenrpca::tensor::dist(t.data(), rec.data());
        let obj = fit.objectives.last().unwrap();
        prop_assert!((res * res - obj * obj).abs() <= 1e-10 * (1.0 + t.fro_norm().powi(2)));
        prop_assert!(res <= t.fro_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn psnr_is_symmetric_and_scale_aware(a in prop::collection::vec(0.0f64..255.0, 1..40), noise in 0.1f64..5.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + noise * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for mode in [PsnrMode::Summed, PsnrMode::Mean] {
            let p = psnr(&a, &b, mode).unwrap();
            prop_assert!((p - psnr(&b, &a, mode).unwrap()).abs() < 1e-12);
        }
        let gap = psnr(&a, &b, PsnrMode::Mean).unwrap() - psnr(&a, &b, PsnrMode::Summed).unwrap();
        prop_assert!((gap - 10.0 * (a.len() as f64).log10()).abs() < 1e-9);
    }

    #[test]
    fn f_measure_is_bounded(bits in prop::collection::vec(any::<(bool, bool)>(), 16)) {
        let dims = [4, 2, 2];
        let a = ForegroundMask { dims, data: bits.iter().map(|b| b.0).collect() };
        let b = ForegroundMask { dims, data: bits.iter().map(|b| b.1).collect() };
        let (frames, mean) = f_measure(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&mean));
        for f in frames {
            prop_assert!((0.0..=1.0).contains(&f.f_measure));
        }
        prop_assert_eq!(f_measure(&a, &a).unwrap().1, 1.0);
    }

    #[test]
    fn relative_binarization_is_monotone_in_tau(x in volume(5), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = binarize(&x, Binarization::Relative { tau: lo }).unwrap();
        let b = binarize(&x, Binarization::Relative { tau: hi }).unwrap();
        for (p, q) in a.data.iter().zip(&b.data) {
            prop_assert!(*p || !*q);
        }
    }

    #[test]
    fn volume_container_round_trips(t in volume(6), seed in proptest::option::of(any::<u64>())) {
        let mut buf = Vec::new();
        write_volume(&mut buf, &t, seed).unwrap();
        let (back, header) = read_volume(buf.as_slice()).unwrap();
        prop_assert_eq!(header.seed, seed);
        prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
