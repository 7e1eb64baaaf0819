//! Exact ReLU networks for watertight piecewise-linear hypersurfaces.
//!
//! A closed polygon (2D) or closed triangle mesh (3D) bounds a polytope `P`.
//! Each supporting plane gives an affine function `h_i` that is negative on
//! the inner side of its facets. The sign vectors `lambda` whose cells
//! `{x : lambda_i h_i(x) >= 0}` lie inside `P` define
//! `f(x) = max_lambda min_i lambda_i h_i(x)`, positive inside `P`, negative
//! outside and zero on the surface. [`compile_to_mlp`] builds a ReLU network
//! computing `f` from pairwise max/min gadgets.

mod cells;
mod compile;

pub use cells::{enumerate_lambda, eval_f, SignVectorSet, MAX_PLANES};
pub use compile::{
    compile_to_mlp, gadget_max, gadget_min, tree_max, verify, write_verify_report, VerifyReport,
    MAX_COMPILE_TERMS,
};

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::rng;

/// Oriented supporting plane `h(x) = normal . x + offset` with a unit normal
/// pointing out of the enclosed region.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }
}

/// A closed polygon or triangle mesh with its deduplicated supporting planes.
#[derive(Debug, Clone)]
pub struct PlSurface {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    /// Vertex indices per facet: edges in 2D, triangles in 3D, ordered so the
    /// outward normal follows the right-hand rule.
    facets: Vec<Vec<usize>>,
    planes: Vec<Plane>,
    facet_plane: Vec<usize>,
    convex: bool,
}

const COPLANAR_TOL: f64 = 1e-9;

impl PlSurface {
    /// Simple polygon from its vertex loop, in either orientation.
    pub fn polygon(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::NotWatertight(format!("polygon has {n} vertices")));
        }
        if vertices.iter().any(|v| v.len() != 2 || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Format("polygon vertices need two finite coordinates".into()));
        }
        let area: f64 = (0..n)
            .map(|i| {
                let (a, b) = (&vertices[i], &vertices[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        if area == 0.0 {
            return Err(Error::NotWatertight("polygon has zero area".into()));
        }
        let ccw = area > 0.0;
        let facets: Vec<Vec<usize>> = (0..n)
            .map(|i| if ccw { vec![i, (i + 1) % n] } else { vec![(i + 1) % n, i] })
            .collect();
        for f in &facets {
            if vertices[f[0]] == vertices[f[1]] {
                return Err(Error::NotWatertight("repeated consecutive vertex".into()));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_touch(&vertices, &facets[i], &facets[j]) {
                    return Err(Error::NotWatertight(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Self::finish(2, vertices, facets)
    }

    /// Closed, consistently oriented triangle mesh.
    pub fn mesh(vertices: Vec<Vec<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| v.len() != 3 || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Format("mesh vertices need three finite coordinates".into()));
        }
        if triangles.len() < 4 {
            return Err(Error::NotWatertight("a closed mesh needs at least 4 triangles".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::Format(format!("triangle {t:?} references a missing vertex")));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 || directed.get(&(b, a)) != Some(&1) {
                return Err(Error::NotWatertight(format!(
                    "edge ({a}, {b}) is not shared by exactly two consistently oriented triangles"
                )));
            }
        }
        let volume: f64 = triangles
            .iter()
            .map(|t| dot(&vertices[t[0]], &cross(&vertices[t[1]], &vertices[t[2]])))
            .sum();
        if volume == 0.0 {
            return Err(Error::NotWatertight("mesh encloses zero volume".into()));
        }
        let facets = triangles
            .into_iter()
            .map(|t| if volume > 0.0 { t.to_vec() } else { vec![t[0], t[2], t[1]] })
            .collect();
        Self::finish(3, vertices, facets)
    }

    fn finish(dim: usize, vertices: Vec<Vec<f64>>, facets: Vec<Vec<usize>>) -> Result<Self> {
        let mut planes: Vec<Plane> = Vec::new();
        let mut facet_plane = Vec::with_capacity(facets.len());
        for f in &facets {
            let a = &vertices[f[0]];
            let raw = if dim == 2 {
                let b = &vertices[f[1]];
                vec![b[1] - a[1], a[0] - b[0]]
            } else {
                let u: Vec<f64> = vertices[f[1]].iter().zip(a).map(|(p, q)| p - q).collect();
                let v: Vec<f64> = vertices[f[2]].iter().zip(a).map(|(p, q)| p - q).collect();
                cross(&u, &v).to_vec()
            };
            let len = norm2(&raw);
            if !(len > 0.0) {
                return Err(Error::NotWatertight("degenerate facet".into()));
            }
            let normal: Vec<f64> = raw.iter().map(|v| v / len).collect();
            let plane = Plane {
                offset: -dot(&normal, a),
                normal,
            };
            let existing = planes.iter().position(|p| {
                (p.offset - plane.offset).abs() <= COPLANAR_TOL
                    && p.normal.iter().zip(&plane.normal).all(|(x, y)| (x - y).abs() <= COPLANAR_TOL)
            });
            facet_plane.push(existing.unwrap_or_else(|| {
                planes.push(plane);
                planes.len() - 1
            }));
        }
        let scale = diag(&bbox(&vertices));
        let convex = planes
            .iter()
            .all(|p| vertices.iter().all(|v| p.eval(v) <= COPLANAR_TOL * scale));
        let s = PlSurface {
            dim,
            vertices,
            facets,
            planes,
            facet_plane,
            convex,
        };
        s.check_orientation()?;
        Ok(s)
    }

    /// Points just inside and just outside every facet centroid must agree
    /// with the membership oracle.
    fn check_orientation(&self) -> Result<()> {
        let delta = 1e-7 * diag(&self.bounds());
        for (k, f) in self.facets.iter().enumerate() {
            let c = self.facet_centroid(f);
            let n = &self.planes[self.facet_plane[k]].normal;
            let inner: Vec<f64> = c.iter().zip(n).map(|(a, b)| a - delta * b).collect();
            let outer: Vec<f64> = c.iter().zip(n).map(|(a, b)| a + delta * b).collect();
            if !self.contains(&inner) || self.contains(&outer) {
                return Err(Error::NotWatertight(format!(
                    "membership test disagrees with the orientation of facet {k}"
                )));
            }
        }
        Ok(())
    }

    fn facet_centroid(&self, f: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for &i in f {
            for (a, v) in c.iter_mut().zip(&self.vertices[i]) {
                *a += v / f.len() as f64;
            }
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Vec<usize>] {
        &self.facets
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Axis-aligned bounding box of the vertices.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        bbox(&self.vertices)
    }

    /// Membership in the enclosed region. Points on the surface may go either
    /// way. Convex inputs use the half-space test, polygons even-odd ray
    /// casting, meshes a majority vote over three ray casts.
    pub fn contains(&self, x: &[f64]) -> bool {
        if self.convex {
            return self.planes.iter().all(|p| p.eval(x) < 0.0);
        }
        if self.dim == 2 {
            let mut inside = false;
            for f in &self.facets {
                let (a, b) = (&self.vertices[f[0]], &self.vertices[f[1]]);
                if (a[1] > x[1]) != (b[1] > x[1]) {
                    let t = (x[1] - a[1]) / (b[1] - a[1]);
                    if x[0] < a[0] + t * (b[0] - a[0]) {
                        inside = !inside;
                    }
                }
            }
            return inside;
        }
        const RAYS: [[f64; 3]; 3] = [
            [0.5377, 0.4162, 0.7333],
            [-0.6124, 0.3536, 0.7071],
            [0.2673, -0.8018, 0.5345],
        ];
        let votes = RAYS.iter().filter(|r| self.ray_parity(x, r)).count();
        votes >= 2
    }

    fn ray_parity(&self, o: &[f64], dir: &[f64; 3]) -> bool {
        let mut inside = false;
        for f in &self.facets {
            let [a, b, c] = [0, 1, 2].map(|k| self.vertices[f[k]].as_slice());
            let e1: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
            let e2: Vec<f64> = c.iter().zip(a).map(|(p, q)| p - q).collect();
            let pv = cross(dir, &e2);
            let det = dot(&e1, &pv);
            if det.abs() < 1e-15 {
                continue;
            }
            let tv: Vec<f64> = o.iter().zip(a).map(|(p, q)| p - q).collect();
            let u = dot(&tv, &pv) / det;
            if !(0.0..=1.0).contains(&u) {
                continue;
            }
            let qv = cross(&tv, &e1);
            let v = dot(dir, &qv) / det;
            if v < 0.0 || u + v > 1.0 {
                continue;
            }
            if dot(&e2, &qv) / det > 0.0 {
                inside = !inside;
            }
        }
        inside
    }

    /// Points on a regular grid over every facet: `per_edge + 1` points per
    /// polygon edge, a barycentric grid of that resolution per triangle.
    pub fn facet_samples(&self, per_edge: usize) -> Vec<Vec<f64>> {
        let m = per_edge.max(1);
        let mut out = Vec::new();
        for f in &self.facets {
            let corners: Vec<&[f64]> = f.iter().map(|&i| self.vertices[i].as_slice()).collect();
            if self.dim == 2 {
                for j in 0..=m {
                    let t = j as f64 / m as f64;
                    out.push(lerp(corners[0], corners[1], t));
                }
            } else {
                for i in 0..=m {
                    for j in 0..=m - i {
                        let (u, v) = (i as f64 / m as f64, j as f64 / m as f64);
                        let w = 1.0 - u - v;
                        out.push(
                            (0..3)
                                .map(|a| w * corners[0][a] + u * corners[1][a] + v * corners[2][a])
                                .collect(),
                        );
                    }
                }
            }
        }
        out
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn bbox(points: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let d = points.first().map_or(0, Vec::len);
    let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for p in points {
        for (bb, &v) in b.iter_mut().zip(p) {
            bb.0 = bb.0.min(v);
            bb.1 = bb.1.max(v);
        }
    }
    b
}

fn diag(b: &[(f64, f64)]) -> f64 {
    b.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
}

fn orient(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_touch(v: &[Vec<f64>], e: &[usize], f: &[usize]) -> bool {
    let (p, q, r, s) = (&v[e[0]], &v[e[1]], &v[f[0]], &v[f[1]]);
    let (d1, d2) = (orient(p, q, r), orient(p, q, s));
    let (d3, d4) = (orient(r, s, p), orient(r, s, q));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    let on = |a: &[f64], b: &[f64], c: &[f64], o: f64| {
        o == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(p, q, r, d1) || on(p, q, s, d2) || on(r, s, p, d3) || on(r, s, q, d4)
}

/// Parse `v x y [z]` vertex lines and, for meshes, `f i j k` triangle lines
/// with 1-based indices. Without `f` lines the vertices form a polygon loop.
/// `#` starts a comment.
pub fn parse_surface(text: &str, path: &Path) -> Result<PlSurface> {
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let v: Vec<f64> = tok
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("{t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if !(2..=3).contains(&v.len()) {
                    return Err(err(format!("vertex needs 2 or 3 coordinates, found {}", v.len())));
                }
                if vertices.first().is_some_and(|f| f.len() != v.len()) {
                    return Err(err("mixed vertex dimensions".into()));
                }
                vertices.push(v);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| match t.parse::<usize>() {
                        Ok(i) if i >= 1 => Ok(i - 1),
                        _ => Err(err(format!("bad vertex index {t:?}"))),
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(err("faces must be triangles".into()));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            Some(other) => return Err(err(format!("unknown record {other:?}"))),
            None => unreachable!(),
        }
    }
    match vertices.first().map(Vec::len) {
        None => Err(Error::Empty("surface file")),
        Some(2) if triangles.is_empty() => PlSurface::polygon(vertices),
        Some(3) if !triangles.is_empty() => PlSurface::mesh(vertices, triangles),
        Some(d) => Err(Error::Format(format!(
            "{d}D vertices with {} triangles: polygons take 2D vertices only, meshes 3D vertices and faces",
            triangles.len()
        ))),
    }
}

pub fn load_surface(path: impl AsRef<Path>) -> Result<PlSurface> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_surface(&text, path)
}

pub fn unit_square() -> PlSurface {
    PlSurface::polygon(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]])
        .expect("unit square is a valid polygon")
}

pub fn unit_cube() -> PlSurface {
    let v: Vec<Vec<f64>> = (0..8)
        .map(|k| vec![(k & 1) as f64, (k >> 1 & 1) as f64, (k >> 2 & 1) as f64])
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    PlSurface::mesh(v, tris).expect("unit cube is a valid mesh")
}

/// Star-shaped, hence simple, polygon with `k` vertices: sorted random
/// angles and radii in `[0.3, 1]` around the origin.
pub fn random_star_polygon(k: usize, seed: u64) -> Result<PlSurface> {
    if k < 3 {
        return Err(Error::Config("a polygon needs at least 3 vertices".into()));
    }
    let mut r = rng::seeded(seed);
    let tau = std::f64::consts::TAU;
    let step = tau / k as f64;
    let vertices = (0..k)
        .map(|i| {
            let a = step * (i as f64 + r.gen_range(0.1..0.9));
            let rad = r.gen_range(0.3..1.0);
            vec![rad * a.cos(), rad * a.sin()]
        })
        .collect();
    PlSurface::polygon(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_planes_point_outward() {
        let s = unit_square();
        assert_eq!(s.planes().len(), 4);
        assert!(s.is_convex());
        for p in s.planes() {
            assert!(p.eval(&[0.5, 0.5]) < 0.0);
        }
        assert!(s.contains(&[0.2, 0.9]));
        assert!(!s.contains(&[1.2, 0.5]));
    }

    #[test]
    fn cube_dedups_coplanar_triangles() {
        let c = unit_cube();
        assert_eq!(c.facets().len(), 12);
        assert_eq!(c.planes().len(), 6);
        assert!(c.contains(&[0.5, 0.5, 0.5]));
        assert!(!c.contains(&[0.5, 1.5, 0.5]));
    }

    #[test]
    fn rejects_self_intersecting_and_open_inputs() {
        let bowtie = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(PlSurface::polygon(bowtie), Err(Error::NotWatertight(_))));
        let c = unit_cube();
        let mut tris: Vec<[usize; 3]> = c.facets().iter().map(|f| [f[0], f[1], f[2]]).collect();
        tris.pop();
        assert!(matches!(
            PlSurface::mesh(c.vertices().to_vec(), tris),
            Err(Error::NotWatertight(_))
        ));
    }

    #[test]
    fn nonconvex_polygon_ray_casting() {
        let l = PlSurface::polygon(vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![2.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![0.0, 2.0],
        ])
        .unwrap();
        assert!(!l.is_convex());
        assert!(l.contains(&[0.5, 1.5]));
        assert!(l.contains(&[1.5, 0.5]));
        assert!(!l.contains(&[1.5, 1.5]));
    }

    #[test]
    fn parses_polygons_and_meshes() {
        let p = Path::new("mem.surf");
        let sq = parse_surface("# square\nv 0 0\nv 1 0\nv 1 1\nv 0 1\n", p).unwrap();
        assert_eq!(sq.dim(), 2);
        let mut text = String::new();
        for v in unit_cube().vertices() {
            text += &format!("v {} {} {}\n", v[0], v[1], v[2]);
        }
        for f in unit_cube().facets() {
            text += &format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        assert_eq!(parse_surface(&text, p).unwrap().planes().len(), 6);
        match parse_surface("v 0 0\nv 1 q\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_surface("v 0 0 0\nv 1 0 0\nv 0 1 0\n", p).is_err());
    }
}
