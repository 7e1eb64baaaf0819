use levelsets::pl::{
    compile_to_mlp, enumerate_lambda, eval_f, gadget_max, random_star_polygon, tree_max, unit_cube,
    unit_square, verify, PlSurface,
};
use levelsets::rng;
use proptest::prelude::*;
use rand::Rng;

fn l_prism() -> PlSurface {
    let base = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
    let n = base.len();
    let mut v = Vec::new();
    for z in [0.0, 1.0] {
        v.extend(base.iter().map(|p| vec![p[0], p[1], z]));
    }
    let mut t = Vec::new();
    for i in 1..n - 1 {
        t.push([0, i + 1, i]);
        t.push([n, n + i, n + i + 1]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        t.push([i, j, n + j]);
        t.push([i, n + j, n + i]);
    }
    PlSurface::mesh(v, t).unwrap()
}

#[test]
fn random_polygons_compile_exactly() {
    for seed in 0..10 {
        let k = 4 + (seed as usize % 7);
        let s = random_star_polygon(k, seed).unwrap();
        let l = enumerate_lambda(&s).unwrap();
        let m = compile_to_mlp(&s, &l).unwrap();
        let rep = verify(&s, &l, &m, 5_000, 8, seed).unwrap();
        assert!(rep.max_rel_diff <= 1e-10, "seed {seed}: {rep:?}");
        assert_eq!(rep.sign_agree, rep.sign_checked, "seed {seed}");
        assert!(rep.facet_max_abs <= 1e-10, "seed {seed}: {rep:?}");
    }
}

#[test]
fn cells_cover_the_interior() {
    for seed in 0..5 {
        let s = random_star_polygon(8, 100 + seed).unwrap();
        let l = enumerate_lambda(&s).unwrap();
        let mut r = rng::seeded(seed);
        for _ in 0..10_000 {
            let x = [r.gen_range(-1.1..1.1), r.gen_range(-1.1..1.1)];
            let h: Vec<f64> = s.planes().iter().map(|p| p.eval(&x)).collect();
            if h.iter().any(|v| v.abs() < 1e-9) {
                continue;
            }
            let covered = l.vectors().iter().any(|lam| {
                lam.iter()
                    .zip(&h)
                    .all(|(&sg, &v)| sg == 0 || sg as f64 * v > 0.0)
            });
            assert_eq!(covered, s.contains(&x), "seed {seed} at {x:?}");
        }
    }
}

#[test]
fn unit_cube_compiles() {
    let c = unit_cube();
    let l = enumerate_lambda(&c).unwrap();
    let m = compile_to_mlp(&c, &l).unwrap();
    assert!((m.eval(&[0.5, 0.5, 0.5])[0] - 0.5).abs() <= 1e-12);
    assert!((m.eval(&[0.5, 0.5, 1.25])[0] + 0.25).abs() <= 1e-12);
    let rep = verify(&c, &l, &m, 5_000, 6, 1).unwrap();
    assert!(rep.max_rel_diff <= 1e-10 && rep.facet_max_abs <= 1e-10);
    assert_eq!(rep.sign_agree, rep.sign_checked);
}

#[test]
fn nonconvex_prism_compiles() {
    let p = l_prism();
    assert!(!p.is_convex());
    assert!(p.contains(&[0.5, 1.5, 0.5]));
    assert!(!p.contains(&[1.5, 1.5, 0.5]));
    let l = enumerate_lambda(&p).unwrap();
    assert_eq!(l.minimal_count(), 3);
    let m = compile_to_mlp(&p, &l).unwrap();
    let rep = verify(&p, &l, &m, 5_000, 4, 2).unwrap();
    assert!(rep.max_rel_diff <= 1e-10, "{rep:?}");
    assert!(rep.facet_max_abs <= 1e-10, "{rep:?}");
    assert_eq!(rep.sign_agree, rep.sign_checked);
}

#[test]
fn minimal_vectors_alone_keep_signs() {
    let s = random_star_polygon(9, 7).unwrap();
    let full = enumerate_lambda(&s).unwrap();
    let minimal = full.minimal_only();
    let mut r = rng::seeded(9);
    for _ in 0..5_000 {
        let x = [r.gen_range(-1.1..1.1), r.gen_range(-1.1..1.1)];
        let (a, b) = (eval_f(&s, &full, &x), eval_f(&s, &minimal, &x));
        assert!(b <= a);
        if a.abs() > 1e-9 && b.abs() > 1e-9 {
            assert_eq!(a > 0.0, b > 0.0);
        }
        if a > 0.0 {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn square_formula_examples() {
    let s = unit_square();
    let l = enumerate_lambda(&s).unwrap();
    assert_eq!(eval_f(&s, &l, &[0.5, 0.5]), 0.5);
    assert_eq!(eval_f(&s, &l, &[1.5, 0.5]), -0.5);
    assert_eq!(eval_f(&s, &l, &[0.0, 0.7]), 0.0);
}

proptest! {
    #[test]
    fn tree_max_matches_fold(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let fold = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!((tree_max(&values) - fold).abs() <= 8.0 * f64::EPSILON * scale);
    }

    #[test]
    fn gadget_max_is_symmetric(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assert_eq!(gadget_max(a, b), gadget_max(b, a));
    }
}
