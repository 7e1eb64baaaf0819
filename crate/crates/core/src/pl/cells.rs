use std::collections::BTreeSet;

use super::{diag, PlSurface};
use crate::error::{Error, Result};
use crate::linalg::{dot, solve, Matrix};

/// Enumeration over `{-1, 1}^k` is exponential; inputs with more distinct
/// supporting planes are rejected.
pub const MAX_PLANES: usize = 16;

/// Sign vectors whose cells lie inside the enclosed region. Entries are in
/// `{-1, 0, 1}`; the first `minimal` vectors have no zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SignVectorSet {
    vectors: Vec<Vec<i8>>,
    minimal: usize,
}

impl SignVectorSet {
    pub fn new(vectors: Vec<Vec<i8>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Empty("sign vector set"));
        }
        let k = vectors[0].len();
        if vectors.iter().any(|v| v.len() != k || v.iter().any(|s| !(-1..=1).contains(s))) {
            return Err(Error::Format("sign vectors need equal length and entries in {-1, 0, 1}".into()));
        }
        let minimal = vectors.iter().take_while(|v| !v.contains(&0)).count();
        Ok(SignVectorSet { vectors, minimal })
    }

    pub fn vectors(&self) -> &[Vec<i8>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn num_planes(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn minimal_count(&self) -> usize {
        self.minimal
    }

    /// Drops the zero-containing vectors.
    pub fn minimal_only(&self) -> SignVectorSet {
        SignVectorSet {
            vectors: self.vectors[..self.minimal].to_vec(),
            minimal: self.minimal,
        }
    }
}

/// Half-space `g . x <= r`.
type HalfSpace = (Vec<f64>, f64);

/// Cells of the plane arrangement inside the surface, found by depth-first
/// search over sign choices with pruning of empty or flat partial cells,
/// followed by merging of cell pairs that differ in a single sign.
pub fn enumerate_lambda(surface: &PlSurface) -> Result<SignVectorSet> {
    let k = surface.planes().len();
    if k > MAX_PLANES {
        return Err(Error::Budget(format!("{k} supporting planes exceed the limit of {MAX_PLANES}")));
    }
    let bounds = surface.bounds();
    let scale = diag(&bounds);
    let d = surface.dim();
    let mut cons: Vec<HalfSpace> = Vec::new();
    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        let pad = 0.25 * scale;
        let mut e = vec![0.0; d];
        e[a] = 1.0;
        cons.push((e.clone(), hi + pad));
        e[a] = -1.0;
        cons.push((e, -(lo - pad)));
    }
    let mut search = Search {
        surface,
        bounds,
        scale,
        signs: Vec::with_capacity(k),
        found: Vec::new(),
    };
    search.descend(&mut cons)?;
    if search.found.is_empty() {
        return Err(Error::NotWatertight("no arrangement cell lies inside the surface".into()));
    }
    let mut vectors = search.found;
    vectors.sort();
    let mut level: BTreeSet<Vec<i8>> = vectors.iter().cloned().collect();
    let mut merged: BTreeSet<Vec<i8>> = BTreeSet::new();
    while !level.is_empty() {
        let items: Vec<&Vec<i8>> = level.iter().collect();
        let mut next = BTreeSet::new();
        for (i, u) in items.iter().enumerate() {
            for v in &items[i + 1..] {
                let diff: Vec<usize> = (0..k).filter(|&j| u[j] != v[j]).collect();
                if diff.len() == 1 && u[diff[0]] != 0 && v[diff[0]] != 0 {
                    let mut w = (*u).clone();
                    w[diff[0]] = 0;
                    next.insert(w);
                }
            }
        }
        merged.extend(next.iter().cloned());
        level = next;
    }
    vectors.extend(merged);
    SignVectorSet::new(vectors)
}

struct Search<'a> {
    surface: &'a PlSurface,
    bounds: Vec<(f64, f64)>,
    scale: f64,
    signs: Vec<i8>,
    found: Vec<Vec<i8>>,
}

impl Search<'_> {
    fn descend(&mut self, cons: &mut Vec<HalfSpace>) -> Result<()> {
        let depth = self.signs.len();
        if depth == self.surface.planes().len() {
            return self.classify(cons);
        }
        let plane = &self.surface.planes()[depth];
        for s in [-1i8, 1] {
            let sf = s as f64;
            cons.push((plane.normal.iter().map(|v| -sf * v).collect(), sf * plane.offset));
            self.signs.push(s);
            if interior_point(cons, self.surface.dim(), self.scale).is_some() {
                self.descend(cons)?;
            }
            self.signs.pop();
            cons.pop();
        }
        Ok(())
    }

    fn classify(&mut self, cons: &[HalfSpace]) -> Result<()> {
        let d = self.surface.dim();
        let Some((centre, verts)) = interior_point(cons, d, self.scale) else {
            return Ok(());
        };
        if !self.surface.contains(&centre) {
            return Ok(());
        }
        let tol = 1e-9 * self.scale;
        let boxed = verts.iter().all(|v| {
            v.iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol)
        });
        if !boxed {
            return Err(Error::NotWatertight(
                "a cell reported inside the surface extends past its bounding box".into(),
            ));
        }
        self.found.push(self.signs.clone());
        Ok(())
    }
}

/// Vertex centroid and vertices of `{x : g . x <= r}` when the set is full
/// dimensional; `None` when it is empty or flat.
fn interior_point(cons: &[HalfSpace], d: usize, scale: f64) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let feas = 1e-10 * scale;
    let n = cons.len();
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| cons[i].0.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| cons[i].1).collect();
        let m = Matrix::from_rows(&rows).expect("square system");
        if let Some(v) = solve(&m, &rhs) {
            if cons.iter().all(|(g, r)| dot(g, &v) <= r + feas) {
                verts.push(v);
            }
        }
        // Next d-subset in lexicographic order.
        let mut i = d;
        loop {
            if i == 0 {
                return centroid(cons, verts, d, scale);
            }
            i -= 1;
            if idx[i] < n - d + i {
                idx[i] += 1;
                for j in i + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn centroid(cons: &[HalfSpace], verts: Vec<Vec<f64>>, d: usize, scale: f64) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    if verts.len() < d + 1 {
        return None;
    }
    let mut c = vec![0.0; d];
    for v in &verts {
        for (a, x) in c.iter_mut().zip(v) {
            *a += x / verts.len() as f64;
        }
    }
    let slack = cons.iter().map(|(g, r)| r - dot(g, &c)).fold(f64::INFINITY, f64::min);
    (slack > 1e-9 * scale).then_some((c, verts))
}

/// `max over lambda of min over i of lambda_i h_i(x)`.
pub fn eval_f(surface: &PlSurface, lambda: &SignVectorSet, x: &[f64]) -> f64 {
    let h: Vec<f64> = surface.planes().iter().map(|p| p.eval(x)).collect();
    lambda
        .vectors()
        .iter()
        .map(|l| {
            l.iter()
                .zip(&h)
                .map(|(&s, &v)| if s == 0 { 0.0 } else { s as f64 * v })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
