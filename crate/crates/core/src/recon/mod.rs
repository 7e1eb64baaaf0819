//! Point clouds, nearest-neighbour queries, iso-set extraction and
//! reconstruction metrics.

mod curve;
mod kdtree;
mod march;

pub use curve::extract_curve;
pub use kdtree::{brute_nearest, KdTree, Metric};
pub use march::{extract_isosurface, marching_cubes_table, IsoMesh, Polyline};

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::mlp::Batch;
use crate::rng;

/// A point set with an exact nearest-neighbour index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Batch,
    tree: KdTree,
}

impl PointCloud {
    pub fn new(points: Batch) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        let tree = KdTree::new(points.dim(), points.as_slice().to_vec());
        Ok(PointCloud { points, tree })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        PointCloud::new(Batch::from_rows(dim, rows)?)
    }

    pub fn points(&self) -> &Batch {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    /// Euclidean distance to the nearest cloud point and its index.
    pub fn nearest(&self, x: &[f64]) -> (f64, usize) {
        self.tree.nearest(x, Metric::L2).expect("nonempty cloud")
    }

    pub fn nearest_with(&self, x: &[f64], metric: Metric) -> (f64, usize) {
        self.tree.nearest(x, metric).expect("nonempty cloud")
    }
}

pub fn dist_to_cloud(cloud: &PointCloud, x: &[f64]) -> Result<(f64, usize)> {
    check_dim("query", cloud.dim(), x.len())?;
    Ok(cloud.nearest(x))
}

/// Parse whitespace-separated coordinates, one point per line. Blank lines
/// and `#` comments are ignored; every point must have the same dimension.
pub fn parse_cloud(text: &str, path: &Path) -> Result<Batch> {
    let mut dim = 0;
    let mut data = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite coordinate".into()));
        }
        if dim == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(err(format!("expected {dim} coordinates, found {}", row.len())));
        }
        data.extend(row);
    }
    if data.is_empty() {
        return Err(Error::Empty("point cloud file"));
    }
    Batch::new(dim, data)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PointCloud::new(parse_cloud(&text, path)?)
}

/// 17 significant digits, enough for any `f64` to read back exactly.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_points<W: Write>(points: &Batch, mut w: W) -> std::io::Result<()> {
    for row in points.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_points(points: &Batch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_points(points, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes triangles as an OBJ mesh; 2D polylines are written as OBJ `l`
/// elements with `z = 0`.
pub fn save_mesh(mesh: &IsoMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    mesh.write_obj(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes each polyline's points, blank-line separated.
pub fn save_polylines(mesh: &IsoMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (k, pl) in mesh.polylines.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for &i in &pl.indices {
            let line: Vec<String> = mesh.vertices[i].iter().map(|&v| fmt17(v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn directed(a: &PointCloud, b: &PointCloud, metric: Metric) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for i in 0..a.len() {
        let (d, _) = b.nearest_with(a.row(i), metric);
        sum += d;
        max = max.max(d);
    }
    (sum / a.len() as f64, max)
}

/// Mean nearest distance from `a` to `b` plus the mean from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud, metric: Metric) -> Result<f64> {
    check_dim("chamfer point dimension", a.dim(), b.dim())?;
    let (ab, _) = directed(a, b, metric);
    let (ba, _) = directed(b, a, metric);
    Ok(ab + ba)
}

/// Larger of the two directed maximal Euclidean nearest distances.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dim("hausdorff point dimension", a.dim(), b.dim())?;
    let (_, ab) = directed(a, b, Metric::L2);
    let (_, ba) = directed(b, a, Metric::L2);
    Ok(ab.max(ba))
}

/// Chamfer and Hausdorff from `O(N M)` scans, for cross-checking.
pub fn brute_metrics(a: &Batch, b: &Batch, metric: Metric) -> (f64, f64) {
    let one = |a: &Batch, b: &Batch| {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for p in a.rows() {
            let (d, _) = brute_nearest(b.as_slice(), b.dim(), p, metric).expect("nonempty set");
            let (e, _) = brute_nearest(b.as_slice(), b.dim(), p, Metric::L2).expect("nonempty set");
            sum += d;
            max = max.max(e);
        }
        (sum / a.len() as f64, max)
    };
    let (ab, mab) = one(a, b);
    let (ba, mba) = one(b, a);
    (ab + ba, mab.max(mba))
}

/// `n` points drawn uniformly by area from a triangle mesh (3D) or by length
/// from its polylines (2D).
pub fn sample_mesh_surface(mesh: &IsoMesh, n: usize, seed: u64) -> Result<Batch> {
    let d = mesh.dim;
    let mut pieces: Vec<(Vec<&[f64]>, f64)> = Vec::new();
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| mesh.vertices[i].as_slice());
        let u: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let v: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
        let cr = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        pieces.push((vec![a, b, c], 0.5 * crate::linalg::norm2(&cr)));
    }
    for pl in &mesh.polylines {
        for w in pl.segments() {
            let a = mesh.vertices[w.0].as_slice();
            let b = mesh.vertices[w.1].as_slice();
            pieces.push((vec![a, b], crate::linalg::dist2(a, b)));
        }
    }
    let total: f64 = pieces.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::Empty("mesh with positive measure"));
    }
    let mut cum = Vec::with_capacity(pieces.len());
    let mut acc = 0.0;
    for p in &pieces {
        acc += p.1;
        cum.push(acc);
    }
    let mut r = rng::seeded(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = r.gen_range(0.0..total);
        let k = cum.partition_point(|&c| c <= u).min(pieces.len() - 1);
        let verts = &pieces[k].0;
        let w: Vec<f64> = if verts.len() == 3 {
            let (mut s, mut t): (f64, f64) = (r.gen(), r.gen());
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            vec![1.0 - s - t, s, t]
        } else {
            let s: f64 = r.gen();
            vec![1.0 - s, s]
        };
        for a in 0..d {
            data.push(verts.iter().zip(&w).map(|(v, wi)| wi * v[a]).sum());
        }
    }
    Batch::new(d, data)
}

/// One row of a metric report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub chamfer_l1: f64,
    pub chamfer_l2: f64,
    pub hausdorff: f64,
}

/// CSV with metric values multiplied by 1000; the header says so.
pub fn write_metric_report<W: Write>(rows: &[MetricRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "name,chamfer_l1_x1e3,chamfer_l2_x1e3,hausdorff_x1e3")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6}",
            r.name,
            r.chamfer_l1 * 1e3,
            r.chamfer_l2 * 1e3,
            r.hausdorff * 1e3
        )?;
    }
    Ok(())
}
