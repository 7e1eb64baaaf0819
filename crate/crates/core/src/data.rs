//! Labeled data, synthetic fixtures and IDX ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::mlp::Batch;
use crate::rng;

/// Points with integer class labels. Binary tasks use class 1 for the
/// positive (`y = +1`) side and class 0 for `y = -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Batch,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(x: Batch, labels: Vec<usize>) -> Result<Self> {
        check_dim("label count", x.len(), labels.len())?;
        Ok(LabeledBatch { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `+1` for class 1, `-1` otherwise.
    pub fn sign(&self, i: usize) -> f64 {
        if self.labels[i] == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledBatch {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
            labels.push(self.labels[i]);
        }
        LabeledBatch {
            x: Batch::new(d, data).expect("rows of a valid batch"),
            labels,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

/// Sixteen points inside `[0, 0.5]^2`: a positive cluster around the centre
/// ringed by negatives.
pub fn fig1_fixture() -> LabeledBatch {
    #[rustfmt::skip]
    let pts: [(f64, f64, usize); 16] = [
        (0.22, 0.25, 1), (0.28, 0.21, 1), (0.25, 0.31, 1), (0.31, 0.28, 1),
        (0.19, 0.30, 1), (0.27, 0.26, 1),
        (0.04, 0.05, 0), (0.25, 0.02, 0), (0.47, 0.06, 0), (0.46, 0.27, 0),
        (0.44, 0.46, 0), (0.24, 0.48, 0), (0.05, 0.44, 0), (0.03, 0.24, 0),
        (0.12, 0.14, 0), (0.38, 0.38, 0),
    ];
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
    let labels = pts.iter().map(|p| p.2).collect();
    LabeledBatch::new(Batch::from_rows(2, &rows).unwrap(), labels).unwrap()
}

/// Two interleaved half circles with isotropic Gaussian noise. Class 0 is the
/// upper moon (centre origin), class 1 the lower moon (centre `(1, 0.5)`).
pub fn two_moons(n: usize, noise: f64, seed: u64) -> LabeledBatch {
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (x, y) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let nx: f64 = normal.sample(&mut rng);
        let ny: f64 = normal.sample(&mut rng);
        rows.push(vec![x + noise * nx, y + noise * ny]);
        labels.push(class);
    }
    LabeledBatch::new(Batch::from_rows(2, &rows).unwrap(), labels).unwrap()
}

/// Uniform points in `[-half, half]^2`, class 1 inside the disc of `radius`
/// and class 0 outside; points within `gap` of the circle are rejected.
pub fn disc_classification(n: usize, half: f64, radius: f64, gap: f64, seed: u64) -> LabeledBatch {
    let mut rng = rng::seeded(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let x: f64 = rng.gen_range(-half..half);
        let y: f64 = rng.gen_range(-half..half);
        let r = (x * x + y * y).sqrt();
        if (r - radius).abs() < gap {
            continue;
        }
        rows.push(vec![x, y]);
        labels.push((r < radius) as usize);
    }
    LabeledBatch::new(Batch::from_rows(2, &rows).unwrap(), labels).unwrap()
}

/// `n` points evenly spaced in angle on a circle of `radius` about the
/// origin, with isotropic Gaussian noise; the angular phase is random.
pub fn circle_cloud(n: usize, radius: f64, noise: f64, seed: u64) -> Batch {
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
        for c in [a.cos(), a.sin()] {
            let z: f64 = normal.sample(&mut rng);
            data.push(radius * c + noise * z);
        }
    }
    Batch::new(2, data).expect("finite circle points")
}

/// `points` plus i.i.d. `N(0, sigma^2)` noise on every coordinate.
pub fn gaussian_noise(points: &Batch, sigma: f64, seed: u64) -> Batch {
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data = points
        .as_slice()
        .iter()
        .map(|&v| {
            let z: f64 = normal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    Batch::new(points.dim(), data).expect("finite noisy points")
}

/// Natural cubic spline through `knots`, parameterized by knot index.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<Vec<f64>>,
    /// Second derivatives at the knots, per coordinate.
    second: Vec<Vec<f64>>,
}

impl CubicSpline {
    pub fn new(knots: Vec<Vec<f64>>) -> Result<Self> {
        let n = knots.len();
        if n < 2 {
            return Err(Error::Config("a spline needs at least 2 knots".into()));
        }
        let d = knots[0].len();
        if knots.iter().any(|k| k.len() != d) {
            return Err(Error::Config("spline knots differ in dimension".into()));
        }
        let mut second = vec![vec![0.0; d]; n];
        if n > 2 {
            // Tridiagonal system (1, 4, 1) for unit knot spacing.
            for a in 0..d {
                let m = n - 2;
                let rhs: Vec<f64> = (1..n - 1)
                    .map(|i| 6.0 * (knots[i + 1][a] - 2.0 * knots[i][a] + knots[i - 1][a]))
                    .collect();
                let mut c = vec![0.0; m];
                let mut r = vec![0.0; m];
                for i in 0..m {
                    let lower = if i > 0 { 1.0 } else { 0.0 };
                    let denom = 4.0 - lower * if i > 0 { c[i - 1] } else { 0.0 };
                    c[i] = 1.0 / denom;
                    r[i] = (rhs[i] - lower * if i > 0 { r[i - 1] } else { 0.0 }) / denom;
                }
                for i in (0..m).rev() {
                    let next = if i + 1 < m { second[i + 2][a] } else { 0.0 };
                    second[i + 1][a] = r[i] - c[i] * next;
                }
            }
        }
        Ok(CubicSpline { knots, second })
    }

    /// Parameter range `[0, knots - 1]`.
    pub fn span(&self) -> f64 {
        (self.knots.len() - 1) as f64
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.span());
        let i = (t.floor() as usize).min(self.knots.len() - 2);
        let u = t - i as f64;
        let (p0, p1) = (&self.knots[i], &self.knots[i + 1]);
        let (m0, m1) = (&self.second[i], &self.second[i + 1]);
        (0..p0.len())
            .map(|a| {
                (1.0 - u) * p0[a]
                    + u * p1[a]
                    + ((1.0 - u).powi(3) - (1.0 - u)) * m0[a] / 6.0
                    + (u.powi(3) - u) * m1[a] / 6.0
            })
            .collect()
    }

    /// `n` points at evenly spaced parameters.
    pub fn sample(&self, n: usize) -> Batch {
        let d = self.knots[0].len();
        let mut data = Vec::with_capacity(n * d);
        for k in 0..n {
            let t = self.span() * k as f64 / (n.max(2) - 1) as f64;
            data.extend(self.eval(t));
        }
        Batch::new(d, data).expect("finite spline points")
    }
}

/// Spline through six random points in `[-1, 1]^3`.
pub fn random_spline(seed: u64) -> CubicSpline {
    let mut rng = rng::seeded(seed);
    let knots = (0..6)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    CubicSpline::new(knots).expect("six 3D knots")
}

/// Greedy farthest-point subsample of `k` rows, starting from a random row.
pub fn farthest_point_sampling(points: &Batch, k: usize, seed: u64) -> Result<Batch> {
    if points.is_empty() {
        return Err(Error::Empty("farthest point sampling input"));
    }
    let n = points.len();
    let k = k.min(n);
    let mut rng = rng::seeded(seed);
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut near: Vec<f64> = (0..n)
        .map(|i| crate::linalg::dist2(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let (next, _) = near
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        chosen.push(next);
        for (i, v) in near.iter_mut().enumerate() {
            *v = v.min(crate::linalg::dist2(points.row(i), points.row(next)));
        }
    }
    let d = points.dim();
    let mut data = Vec::with_capacity(k * d);
    for &i in &chosen {
        data.extend_from_slice(points.row(i));
    }
    Batch::new(d, data)
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

fn read_be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("truncated {what} header")))
}

/// Parse an IDX image file (`u8` pixels) into rows scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Batch> {
    let magic = read_be_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic}, expected {IDX_IMAGES_MAGIC}"
        )));
    }
    let n = read_be_u32(bytes, 4, "image")? as usize;
    let rows = read_be_u32(bytes, 8, "image")? as usize;
    let cols = read_be_u32(bytes, 12, "image")? as usize;
    let d = rows * cols;
    let body = &bytes[16..];
    if d == 0 || body.len() != n * d {
        return Err(Error::Format(format!(
            "image file holds {} bytes of pixels, header promises {}",
            body.len(),
            n * d
        )));
    }
    Batch::new(d, body.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic}, expected {IDX_LABELS_MAGIC}"
        )));
    }
    let n = read_be_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "label file holds {} labels, header promises {n}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Load an IDX image/label pair, draw a deterministic random subset and remap
/// the original digit labels through `merge` (original label -> class).
pub fn ingest_idx(
    images: &Path,
    labels: &Path,
    subset: Option<usize>,
    merge: &BTreeMap<u8, usize>,
    seed: u64,
) -> Result<LabeledBatch> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let x = parse_idx_images(&img)?;
    let raw = parse_idx_labels(&lab)?;
    check_dim("idx label count", x.len(), raw.len())?;
    let mut mapped = Vec::with_capacity(raw.len());
    for &r in &raw {
        match merge.get(&r) {
            Some(&c) => mapped.push(c),
            None if merge.is_empty() => mapped.push(r as usize),
            None => return Err(Error::Format(format!("label {r} missing from merge map"))),
        }
    }
    let full = LabeledBatch::new(x, mapped)?;
    let mut idx: Vec<usize> = (0..full.len()).collect();
    if let Some(k) = subset {
        if k < idx.len() {
            let mut rng = rng::seeded(seed);
            idx.shuffle(&mut rng);
            idx.truncate(k);
            idx.sort_unstable();
        }
    }
    Ok(full.subset(&idx))
}

/// `{0..4 -> 0, 5..9 -> 1}`
pub fn merge_low_high_digits() -> BTreeMap<u8, usize> {
    (0u8..10).map(|d| (d, (d >= 5) as usize)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, r: u32, c: u32, magic: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [magic, n, r, c] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend((0..n * r * c).map(|i| (i % 256) as u8));
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn bad_image_magic_is_a_format_error() {
        let b = idx_images(2, 2, 2, 2049);
        assert!(matches!(parse_idx_images(&b), Err(Error::Format(_))));
        let t = idx_images(2, 2, 2, IDX_IMAGES_MAGIC);
        assert!(parse_idx_images(&t[..t.len() - 1]).is_err());
    }

    #[test]
    fn pixels_are_scaled() {
        let b = parse_idx_images(&idx_images(1, 1, 2, IDX_IMAGES_MAGIC)).unwrap();
        assert_eq!(b.row(0), &[0.0, 1.0 / 255.0]);
    }

    #[test]
    fn merge_map_and_deterministic_subset() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        std::fs::write(&ip, idx_images(300, 2, 2, IDX_IMAGES_MAGIC)).unwrap();
        let labels: Vec<u8> = (0..300).map(|i| (i % 10) as u8).collect();
        std::fs::write(&lp, idx_labels(&labels)).unwrap();
        let merge = merge_low_high_digits();
        let a = ingest_idx(&ip, &lp, Some(100), &merge, 7).unwrap();
        let b = ingest_idx(&ip, &lp, Some(100), &merge, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.labels.iter().all(|&c| c <= 1));
        let full = ingest_idx(&ip, &lp, None, &merge, 0).unwrap();
        for i in 0..300 {
            assert_eq!(full.labels[i], (labels[i] >= 5) as usize);
        }
    }

    #[test]
    fn fixtures_have_expected_shape() {
        let f = fig1_fixture();
        assert_eq!(f.len(), 16);
        assert!(f.x.as_slice().iter().all(|v| (0.0..=0.5).contains(v)));
        let m = two_moons(100, 0.05, 1);
        assert_eq!(m.labels.iter().filter(|&&c| c == 1).count(), 50);
        assert_eq!(m, two_moons(100, 0.05, 1));
    }

    #[test]
    fn spline_interpolates_its_knots() {
        let s = random_spline(4);
        for (i, k) in s.knots.iter().enumerate() {
            let p = s.eval(i as f64);
            for (a, b) in p.iter().zip(k) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // Natural end conditions: zero curvature at both ends.
        assert!(s.second[0].iter().chain(&s.second[5]).all(|&v| v == 0.0));
        // Interior second derivatives satisfy the (1, 4, 1) relation.
        for i in 1..5 {
            for a in 0..3 {
                let lhs = s.second[i - 1][a] + 4.0 * s.second[i][a] + s.second[i + 1][a];
                let rhs = 6.0 * (s.knots[i + 1][a] - 2.0 * s.knots[i][a] + s.knots[i - 1][a]);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn farthest_points_spread_out() {
        let line = Batch::new(1, (0..101).map(|i| i as f64).collect()).unwrap();
        let f = farthest_point_sampling(&line, 2, 0).unwrap();
        let (a, b) = (f.row(0)[0], f.row(1)[0]);
        // The second pick is whichever end lies farther from the first.
        assert_eq!(b, if a < 50.0 { 100.0 } else { 0.0 });
        let c = circle_cloud(8, 2.0, 0.0, 1);
        for r in c.rows() {
            assert!(((r[0] * r[0] + r[1] * r[1]).sqrt() - 2.0).abs() < 1e-12);
        }
    }
}
