mod common;

use common::{handle_at, try_handle_at, random_direction, random_net, random_point, rel_err};
use levelsets::linalg::{norm2, pinv_small};
use levelsets::sample::{sample_grad, sample_position, sample_positions, sample_velocity_matrix};
use levelsets::{Matrix, Mlp};
use proptest::prelude::*;

fn shifted(mlp: &Mlp, dir: &levelsets::ParamVector, t: f64) -> Mlp {
    let mut p = mlp.params();
    p.axpy(t, dir);
    mlp.with_params(&p).unwrap()
}

#[test]
fn gradient_matches_finite_differences_of_position() {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let l = 1 + (seed % 2) as usize;
        let d = 2 + (seed % 4) as usize;
        let mlp = random_net(seed, d, l, 4, 24);
        let h = handle_at(&mlp, &random_point(seed, d));
        let dir = random_direction(seed, mlp.num_params());
        let cot = random_point(seed + 7, d);
        let eps = 1e-5;
        let plus = sample_position(&shifted(&mlp, &dir, eps), &h).unwrap();
        let minus = sample_position(&shifted(&mlp, &dir, -eps), &h).unwrap();
        let fd: f64 = plus.iter().zip(&minus).zip(&cot).map(|((a, b), c)| c * (a - b) / (2.0 * eps)).sum();
        let an = sample_grad(&mlp, &h, &cot).unwrap().dot(&dir);
        worst = worst.max(rel_err(&[an], &[fd], 1e-6));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn level_residual_decays_quadratically() {
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let l = 1 + (seed % 2) as usize;
        let mlp = random_net(seed + 50, 3, l, 3, 16);
        let h = handle_at(&mlp, &random_point(seed, 3));
        let dir = random_direction(seed, mlp.num_params());
        let residual = |t: f64| {
            let m = shifted(&mlp, &dir, t);
            let p = sample_position(&m, &h).unwrap();
            let f = m.eval(&p);
            norm2(&f.iter().zip(h.level()).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let (r1, r2) = (residual(1e-3), residual(5e-4));
        ratios.push(r1 / r2);
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!((3.5..4.5).contains(&median), "halving ratios {ratios:?}");
}

fn tangent_projector(mlp: &Mlp, p: &[f64]) -> Matrix {
    let (_, jac) = mlp.eval_jacobian(p);
    let (l, d) = (mlp.output_dim(), mlp.input_dim());
    let a = Matrix::from_vec(l, d, jac).unwrap();
    let pa = pinv_small(&a, 0.0).unwrap().matmul(&a).unwrap();
    let mut t = Matrix::identity(d);
    for i in 0..d {
        for j in 0..d {
            t.set(i, j, t.get(i, j) - pa.get(i, j));
        }
    }
    t
}

#[test]
fn velocity_columns_are_normal_to_the_level_set() {
    for seed in 0..8u64 {
        let l = 1 + (seed % 2) as usize;
        let mlp = random_net(seed + 90, 4, l, 3, 12);
        let p = random_point(seed, 4);
        let h = handle_at(&mlp, &p);
        let v = sample_velocity_matrix(&mlp, &h).unwrap();
        let tangent = tangent_projector(&mlp, &p).matmul(&v).unwrap();
        let worst = tangent.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = v.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // Near-singular jacobians give large velocities; round-off scales with them.
        assert!(worst <= 1e-8 * scale.max(1.0), "tangential velocity {worst} at scale {scale}");
    }
}

#[test]
fn level_is_preserved_to_first_order() {
    for seed in 0..5u64 {
        let l = 1 + (seed % 2) as usize;
        let mlp = random_net(seed + 200, 3, l, 3, 16);
        let p = random_point(seed, 3);
        let h = handle_at(&mlp, &p);
        let v = sample_velocity_matrix(&mlp, &h).unwrap();
        let (_, jac) = mlp.eval_jacobian(&p);
        let a = Matrix::from_vec(l, 3, jac).unwrap();
        for k in 0..20 {
            let dir = random_direction(seed * 100 + k, mlp.num_params());
            let dp = v.matvec(dir.as_slice());
            let mut total = a.matvec(&dp);
            for (j, t) in total.iter_mut().enumerate() {
                let mut e = vec![0.0; l];
                e[j] = 1.0;
                *t += mlp.vjp_params(&p, &e).unwrap().dot(&dir);
            }
            assert!(norm2(&total) <= 1e-8, "directional derivative {total:?}");
        }
    }
}

#[test]
fn affine_velocity_has_closed_form() {
    // F(x) = W x + b with W 2x3: D_theta p = -W^+ [x^T (x) I | I].
    let w = Matrix::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 3.0]]).unwrap();
    let mlp = Mlp::affine(&w, &[0.1, -0.2]).unwrap();
    let p = vec![0.3, -0.7, 0.2];
    let h = handle_at(&mlp, &p);
    let v = sample_velocity_matrix(&mlp, &h).unwrap();
    let pinv = pinv_small(&w, 0.0).unwrap();
    let m = mlp.num_params();
    let mut dtheta = Matrix::zeros(2, m);
    for k in 0..2 {
        let mut e = vec![0.0; 2];
        e[k] = 1.0;
        dtheta.row_mut(k).copy_from_slice(mlp.vjp_params(&p, &e).unwrap().as_slice());
    }
    // The parameter jacobian of an affine map is x for weights and 1 for biases.
    for k in 0..2 {
        let row = dtheta.row(k);
        assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
        for xi in &p {
            assert!(row.contains(xi));
        }
    }
    let expect = pinv.matmul(&dtheta).unwrap();
    for i in 0..3 {
        for j in 0..m {
            assert!((v.get(i, j) + expect.get(i, j)).abs() <= 1e-14);
        }
    }
}

#[test]
fn batched_positions_equal_single_positions() {
    let mlp = random_net(3, 3, 2, 2, 8);
    let handles: Vec<_> = (0..6).map(|s| handle_at(&mlp, &random_point(s, 3))).collect();
    let moved = shifted(&mlp, &random_direction(1, mlp.num_params()), 0.01);
    let batch = sample_positions(&moved, &handles).unwrap();
    for (h, b) in handles.iter().zip(&batch) {
        assert_eq!(&sample_position(&moved, h).unwrap(), b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn position_at_anchor_is_exact(seed in 0u64..100_000, l in 1usize..3, d in 2usize..6) {
        let mlp = random_net(seed, d, l, 3, 10);
        let p = random_point(seed, d);
        let h = try_handle_at(&mlp, &p);
        prop_assume!(h.is_some());
        let h = h.unwrap();
        prop_assert_eq!(sample_position(&mlp, &h).unwrap(), p);
    }

    #[test]
    fn velocity_rows_are_unit_cotangent_gradients(seed in 0u64..100_000) {
        let mlp = random_net(seed, 3, 2, 2, 6);
        let h = try_handle_at(&mlp, &random_point(seed, 3));
        prop_assume!(h.is_some());
        let h = h.unwrap();
        let v = sample_velocity_matrix(&mlp, &h).unwrap();
        let cot = random_point(seed + 1, 3);
        let g = sample_grad(&mlp, &h, &cot).unwrap();
        let vt = v.transpose().matvec(&cot);
        prop_assert!(rel_err(g.as_slice(), &vt, 1e-12) <= 1e-12);
    }
}
