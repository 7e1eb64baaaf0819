use std::collections::HashMap;

use levelsets::field::FnField;
use levelsets::linalg::Matrix;
use levelsets::mlp::{Batch, Mlp};
use levelsets::recon::{
    brute_metrics, brute_nearest, chamfer, extract_isosurface, hausdorff, load_cloud, save_points, IsoMesh, KdTree,
    Metric, PointCloud,
};
use levelsets::rng;
use proptest::prelude::*;
use rand::Rng;

fn uniform(n: usize, d: usize, seed: u64) -> Batch {
    let mut r = rng::seeded(seed);
    Batch::new(d, (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn sphere_field(radius: f64) -> impl levelsets::Field {
    FnField::new(
        3,
        1,
        move |x: &[f64]| vec![(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() - radius],
        |x: &[f64]| {
            let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt().max(1e-300);
            x.iter().map(|v| v / n).collect()
        },
    )
}

fn circle_field() -> impl levelsets::Field {
    FnField::new(
        2,
        1,
        |x: &[f64]| vec![x[0].hypot(x[1]) - 1.0],
        |x: &[f64]| {
            let n = x[0].hypot(x[1]).max(1e-300);
            vec![x[0] / n, x[1] / n]
        },
    )
}

#[test]
fn kdtree_matches_brute_force_on_a_thousand_queries() {
    for (d, metric) in [(2, Metric::L2), (3, Metric::L2), (3, Metric::L1), (5, Metric::L2)] {
        let pts = uniform(2000, d, 11 + d as u64);
        let tree = KdTree::new(d, pts.as_slice().to_vec());
        let queries = uniform(1000, d, 99);
        for q in queries.rows() {
            let (dt, it) = tree.nearest(q, metric).unwrap();
            let (db, ib) = brute_nearest(pts.as_slice(), d, q, metric).unwrap();
            assert_eq!(dt, db, "distance differs for {q:?}");
            assert_eq!(metric.dist(tree.point(it), q), metric.dist(pts.row(ib), q));
        }
    }
}

#[test]
fn chamfer_and_hausdorff_match_quadratic_oracle() {
    for seed in 0..5 {
        let a = uniform(100, 3, seed);
        let b = uniform(100, 3, seed + 100);
        let (ca, cb) = (PointCloud::new(a.clone()).unwrap(), PointCloud::new(b.clone()).unwrap());
        for metric in [Metric::L1, Metric::L2] {
            let (c, h) = brute_metrics(&a, &b, metric);
            assert_eq!(chamfer(&ca, &cb, metric).unwrap(), c);
            assert_eq!(hausdorff(&ca, &cb).unwrap(), h);
        }
        assert_eq!(chamfer(&ca, &ca, Metric::L2).unwrap(), 0.0);
    }
}

#[test]
fn circle_contour_lies_on_the_circle() {
    let mesh = extract_isosurface(&circle_field(), &[(-1.5, 1.5), (-1.5, 1.5)], 200, 0.0).unwrap();
    assert_eq!(mesh.polylines.len(), 1);
    assert!(mesh.polylines[0].closed);
    let worst = mesh
        .vertices
        .iter()
        .map(|v| (v[0].hypot(v[1]) - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "max radial error {worst}");
}

#[test]
fn affine_field_gives_a_straight_line() {
    let f = Mlp::affine(&Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), &[-0.3]).unwrap();
    let mesh = extract_isosurface(&f, &[(-1.0, 1.0), (-1.0, 1.0)], 33, 0.0).unwrap();
    assert_eq!(mesh.polylines.len(), 1);
    assert!(!mesh.polylines[0].closed);
    for v in &mesh.vertices {
        assert!((v[0] - 0.3).abs() < 1e-12, "{v:?}");
    }
    let ys: Vec<f64> = mesh.vertices.iter().map(|v| v[1]).collect();
    assert!(ys.iter().cloned().fold(f64::INFINITY, f64::min) <= -1.0 + 1e-12);
    assert!(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= 1.0 - 1e-12);
}

#[test]
fn constant_field_has_no_level_set() {
    let f = Mlp::affine(&Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap(), &[2.0]).unwrap();
    let mesh = extract_isosurface(&f, &[(-1.0, 1.0); 3], 10, 0.0).unwrap();
    assert!(mesh.is_empty());
}

fn edge_counts(mesh: &IsoMesh) -> HashMap<(usize, usize), usize> {
    let mut edges = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges
}

#[test]
fn sphere_mesh_is_watertight_and_converges() {
    let bounds = [(-1.0, 1.0); 3];
    let mut errs = Vec::new();
    for res in [16, 32] {
        let mesh = extract_isosurface(&sphere_field(0.7), &bounds, res, 0.0).unwrap();
        assert!(!mesh.triangles.is_empty());
        let edges = edge_counts(&mesh);
        assert!(edges.values().all(|&c| c == 2), "open or non-manifold edge at res {res}");
        // Euler characteristic of a sphere.
        let chi = mesh.vertices.len() as i64 - edges.len() as i64 + mesh.triangles.len() as i64;
        assert_eq!(chi, 2);
        let area: f64 = mesh
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| &mesh.vertices[i]);
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
            })
            .sum();
        errs.push((area - 4.0 * std::f64::consts::PI * 0.49).abs());
    }
    assert!(errs[1] < errs[0], "area error did not shrink: {errs:?}");
}

#[test]
fn cloud_file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.xyz");
    let pts = Batch::new(3, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 1e10, -0.0]).unwrap();
    save_points(&pts, &p).unwrap();
    let back = load_cloud(&p).unwrap();
    assert_eq!(back.points().as_slice(), pts.as_slice());
    assert_eq!(back.dim(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chamfer_is_symmetric_and_hausdorff_bounds_it(seed in 0u64..10_000, n in 1usize..40, m in 1usize..40) {
        let a = PointCloud::new(uniform(n, 2, seed)).unwrap();
        let b = PointCloud::new(uniform(m, 2, seed ^ 0xff)).unwrap();
        let ab = chamfer(&a, &b, Metric::L2).unwrap();
        prop_assert_eq!(ab, chamfer(&b, &a, Metric::L2).unwrap());
        prop_assert!(ab <= 2.0 * hausdorff(&a, &b).unwrap() + 1e-15);
    }

    #[test]
    fn nearest_neighbour_is_invariant_to_point_order(seed in 0u64..10_000) {
        let pts = uniform(64, 3, seed);
        let mut rev: Vec<f64> = Vec::new();
        for r in pts.rows().collect::<Vec<_>>().into_iter().rev() {
            rev.extend_from_slice(r);
        }
        let t1 = KdTree::new(3, pts.as_slice().to_vec());
        let t2 = KdTree::new(3, rev);
        for q in uniform(20, 3, seed + 1).rows() {
            prop_assert_eq!(t1.nearest(q, Metric::L2).unwrap().0, t2.nearest(q, Metric::L2).unwrap().0);
        }
    }
}
