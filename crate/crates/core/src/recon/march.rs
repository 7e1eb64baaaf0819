//! Marching squares and marching cubes on a regular grid.
//!
//! A grid node is positive when `F > t`. Edge vertices are linearly
//! interpolated and shared between neighbouring cells; a vertex that lands
//! exactly on a node is keyed by that node so contours through grid points
//! stay connected.
//!
//! Squares resolve saddle cells by the sign of `F` at the cell centre. The
//! cube table is generated once from a per-face rule: an ambiguous face
//! separates its two positive corners. Both neighbours of a face see the same
//! rule, so the surface is watertight. Face segments are directed with the
//! positive side on their left (seen from outside the cube), which makes the
//! fan triangles of each loop face the positive side.

use std::collections::HashMap;
use std::io::Write;
use std::sync::OnceLock;

use crate::error::{check_dim, Error, Result};
use crate::field::Field;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polyline {
    pub indices: Vec<usize>,
    pub closed: bool,
}

impl Polyline {
    /// Consecutive index pairs, including the closing pair of a loop.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.indices.len();
        let extra = (self.closed && n > 2) as usize;
        (0..(n.saturating_sub(1) + extra)).map(move |k| (self.indices[k], self.indices[(k + 1) % n]))
    }
}

/// Extracted level set: polylines in 2D, triangles in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoMesh {
    pub dim: usize,
    pub level: f64,
    pub vertices: Vec<Vec<f64>>,
    pub polylines: Vec<Polyline>,
    pub triangles: Vec<[usize; 3]>,
}

impl IsoMesh {
    fn empty(dim: usize, level: f64) -> Self {
        IsoMesh {
            dim,
            level,
            vertices: Vec::new(),
            polylines: Vec::new(),
            triangles: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty() && self.triangles.is_empty()
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            let z = v.get(2).copied().unwrap_or(0.0);
            writeln!(
                w,
                "v {} {} {}",
                super::fmt17(v[0]),
                super::fmt17(v[1]),
                super::fmt17(z)
            )?;
        }
        for pl in &self.polylines {
            let mut idx: Vec<String> = pl.indices.iter().map(|i| (i + 1).to_string()).collect();
            if pl.closed {
                idx.push((pl.indices[0] + 1).to_string());
            }
            writeln!(w, "l {}", idx.join(" "))?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Node(usize),
    Edge(usize, usize),
}

struct Grid<'a> {
    bounds: &'a [(f64, f64)],
    n: usize,
    values: Vec<f64>,
    level: f64,
}

impl Grid<'_> {
    fn coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        lo + (hi - lo) * i as f64 / (self.n - 1) as f64
    }

    fn node_pos(&self, id: usize) -> Vec<f64> {
        let mut rest = id;
        (0..self.bounds.len())
            .map(|a| {
                let i = rest % self.n;
                rest /= self.n;
                self.coord(a, i)
            })
            .collect()
    }

    fn positive(&self, id: usize) -> bool {
        self.values[id] > self.level
    }
}

struct VertexPool {
    map: HashMap<Key, usize>,
    vertices: Vec<Vec<f64>>,
}

impl VertexPool {
    fn new() -> Self {
        VertexPool {
            map: HashMap::new(),
            vertices: Vec::new(),
        }
    }

    /// Vertex on the grid edge between nodes `a` and `b` of opposite sign.
    fn on_edge(&mut self, g: &Grid, a: usize, b: usize) -> usize {
        let (neg, pos) = if g.positive(a) { (b, a) } else { (a, b) };
        let (fa, fb) = (g.values[neg], g.values[pos]);
        let s = (g.level - fa) / (fb - fa);
        let key = if s <= 0.0 {
            Key::Node(neg)
        } else {
            Key::Edge(neg.min(pos), neg.max(pos))
        };
        if let Some(&id) = self.map.get(&key) {
            return id;
        }
        let pa = g.node_pos(neg);
        let pb = g.node_pos(pos);
        let v = match key {
            Key::Node(_) => pa,
            Key::Edge(..) => pa.iter().zip(&pb).map(|(x, y)| x + s * (y - x)).collect(),
        };
        let id = self.vertices.len();
        self.vertices.push(v);
        self.map.insert(key, id);
        id
    }
}

/// Extract `{x | F(x) = level}` of a scalar field on a grid with `res` nodes
/// per axis over `bounds` (2D or 3D).
pub fn extract_isosurface<F: Field + ?Sized>(
    field: &F,
    bounds: &[(f64, f64)],
    res: usize,
    level: f64,
) -> Result<IsoMesh> {
    check_dim("field output (scalar)", 1, field.output_dim())?;
    check_dim("bounds", field.input_dim(), bounds.len())?;
    let d = bounds.len();
    if !(d == 2 || d == 3) {
        return Err(Error::Config(format!("iso extraction supports 2D and 3D, got {d}D")));
    }
    if res < 2 {
        return Err(Error::Config("grid resolution must be >= 2".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::Config("bounds must have lo < hi".into()));
    }
    let total = res.pow(d as u32);
    let mut grid = Grid {
        bounds,
        n: res,
        values: Vec::with_capacity(total),
        level,
    };
    for id in 0..total {
        let v = field.eval(&grid.node_pos(id))[0];
        grid.values.push(v);
    }
    let mesh = if d == 2 {
        march_squares(field, &grid)
    } else {
        march_cubes(&grid)
    };
    if mesh.is_empty() {
        log::warn!("no sign change of F - {level} on the grid; empty mesh");
    }
    Ok(mesh)
}

fn march_squares<F: Field + ?Sized>(field: &F, g: &Grid) -> IsoMesh {
    let n = g.n;
    let mut pool = VertexPool::new();
    let mut segs: Vec<(usize, usize)> = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let c = [i + n * j, i + 1 + n * j, i + 1 + n * (j + 1), i + n * (j + 1)];
            let pos = c.map(|id| g.positive(id));
            let crossing: Vec<usize> = (0..4).filter(|&k| pos[k] != pos[(k + 1) % 4]).collect();
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            match crossing.len() {
                2 => pairs.push((crossing[0], crossing[1])),
                4 => {
                    let centre = [
                        0.5 * (g.coord(0, i) + g.coord(0, i + 1)),
                        0.5 * (g.coord(1, j) + g.coord(1, j + 1)),
                    ];
                    let cpos = field.eval(&centre)[0] > g.level;
                    // cut off the corners whose sign differs from the centre
                    for k in 0..4 {
                        if pos[k] != cpos {
                            pairs.push(((k + 3) % 4, k));
                        }
                    }
                }
                _ => {}
            }
            for (ea, eb) in pairs {
                let va = pool.on_edge(g, c[ea], c[(ea + 1) % 4]);
                let vb = pool.on_edge(g, c[eb], c[(eb + 1) % 4]);
                if va != vb {
                    segs.push((va, vb));
                }
            }
        }
    }
    let polylines = link_segments(pool.vertices.len(), &segs);
    IsoMesh {
        polylines,
        vertices: pool.vertices,
        ..IsoMesh::empty(2, g.level)
    }
}

/// Chain undirected segments into polylines: open chains first (from
/// degree-one vertices, lowest index first), then the remaining loops.
fn link_segments(nv: usize, segs: &[(usize, usize)]) -> Vec<Polyline> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (k, &(a, b)) in segs.iter().enumerate() {
        adj[a].push(k);
        adj[b].push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| -> Option<Polyline> {
        let mut idx = vec![start];
        let mut cur = start;
        loop {
            let next = adj[cur].iter().copied().find(|&k| !used[k]);
            let Some(k) = next else { break };
            used[k] = true;
            let (a, b) = segs[k];
            cur = if a == cur { b } else { a };
            if cur == start {
                return Some(Polyline { indices: idx, closed: true });
            }
            idx.push(cur);
        }
        (idx.len() > 1).then_some(Polyline { indices: idx, closed: false })
    };
    for v in 0..nv {
        if adj[v].len() == 1 && !used[adj[v][0]] {
            out.extend(walk(v, &mut used));
        }
    }
    for v in 0..nv {
        while adj[v].iter().any(|&k| !used[k]) {
            out.extend(walk(v, &mut used));
        }
    }
    out
}

/// Cube corner `k` sits at `(k & 1, (k >> 1) & 1, (k >> 2) & 1)`.
fn corner(k: usize) -> [f64; 3] {
    [(k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64]
}

/// The 12 cube edges as corner pairs, ordered by first corner then axis.
fn cube_edges() -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(12);
    for a in 0..8 {
        for bit in 0..3 {
            if a & (1 << bit) == 0 {
                e.push((a, a | (1 << bit)));
            }
        }
    }
    e
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn mean3(pts: &[[f64; 3]]) -> [f64; 3] {
    let n = pts.len() as f64;
    let mut m = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            m[a] += p[a] / n;
        }
    }
    m
}

/// Loops of cube-edge indices for one sign case (bit `k` set = corner `k`
/// positive).
fn build_case(case: usize, edges: &[(usize, usize)]) -> Vec<Vec<u8>> {
    let pos = |k: usize| case & (1 << k) != 0;
    let edge_id = |a: usize, b: usize| {
        edges
            .iter()
            .position(|&(x, y)| (x, y) == (a.min(b), a.max(b)))
            .expect("cube edge")
    };
    let mid = |e: usize| {
        let (a, b) = edges[e];
        let (pa, pb) = (corner(a), corner(b));
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]
    };
    let mut next: [Option<usize>; 12] = [None; 12];
    for axis in 0..3 {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        let (u, w) = (u.min(w), u.max(w));
        for v in 0..2 {
            let q: [usize; 4] = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(a, b)| (v << axis) | (a << u) | (b << w));
            let mut normal = [0.0; 3];
            normal[axis] = if v == 1 { 1.0 } else { -1.0 };
            let fe: [usize; 4] = [0, 1, 2, 3].map(|j| edge_id(q[j], q[(j + 1) % 4]));
            let crossing: Vec<usize> = (0..4).filter(|&j| pos(q[j]) != pos(q[(j + 1) % 4])).collect();
            let mut segs: Vec<(usize, usize, [f64; 3])> = Vec::new();
            match crossing.len() {
                2 => {
                    let cp: Vec<[f64; 3]> = q.iter().filter(|&&k| pos(k)).map(|&k| corner(k)).collect();
                    let cn: Vec<[f64; 3]> = q.iter().filter(|&&k| !pos(k)).map(|&k| corner(k)).collect();
                    segs.push((fe[crossing[0]], fe[crossing[1]], sub3(mean3(&cp), mean3(&cn))));
                }
                4 => {
                    let centre = mean3(&q.map(corner));
                    for j in 0..4 {
                        if pos(q[j]) {
                            segs.push((fe[(j + 3) % 4], fe[j], sub3(corner(q[j]), centre)));
                        }
                    }
                }
                _ => {}
            }
            for (a, b, towards_pos) in segs {
                let left = cross(normal, sub3(mid(b), mid(a)));
                let (a, b) = if dot3(left, towards_pos) > 0.0 { (a, b) } else { (b, a) };
                debug_assert!(next[a].is_none());
                next[a] = Some(b);
            }
        }
    }
    let mut seen = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if seen[start] || next[start].is_none() {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            lp.push(e as u8);
            e = next[e].expect("closed loop on cube surface");
        }
        loops.push(lp);
    }
    loops
}

/// The 256-case table: for each sign case, loops of cube-edge indices.
/// Edge `e` joins the corner pair `cube_edges()[e]`.
pub fn marching_cubes_table() -> &'static [Vec<Vec<u8>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let edges = cube_edges();
        (0..256).map(|c| build_case(c, &edges)).collect()
    })
}

fn march_cubes(g: &Grid) -> IsoMesh {
    let n = g.n;
    let edges = cube_edges();
    let table = marching_cubes_table();
    let mut pool = VertexPool::new();
    let mut tris = Vec::new();
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let node = |c: usize| (i + (c & 1)) + n * ((j + ((c >> 1) & 1)) + n * (k + ((c >> 2) & 1)));
                let case = (0..8).fold(0, |acc, c| acc | ((g.positive(node(c)) as usize) << c));
                for lp in &table[case] {
                    let ids: Vec<usize> = lp
                        .iter()
                        .map(|&e| {
                            let (a, b) = edges[e as usize];
                            pool.on_edge(g, node(a), node(b))
                        })
                        .collect();
                    for t in 1..ids.len().saturating_sub(1) {
                        let tri = [ids[0], ids[t], ids[t + 1]];
                        if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                            tris.push(tri);
                        }
                    }
                }
            }
        }
    }
    IsoMesh {
        triangles: tris,
        vertices: pool.vertices,
        ..IsoMesh::empty(3, g.level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn every_crossed_edge_appears_once_in_table() {
        let edges = cube_edges();
        for (case, loops) in marching_cubes_table().iter().enumerate() {
            let mut count = [0usize; 12];
            for lp in loops {
                assert!(lp.len() >= 3, "case {case}");
                for &e in lp {
                    count[e as usize] += 1;
                }
            }
            for (e, &(a, b)) in edges.iter().enumerate() {
                let crossed = ((case >> a) & 1) != ((case >> b) & 1);
                assert_eq!(count[e], crossed as usize, "case {case} edge {e}");
            }
        }
        assert!(marching_cubes_table()[0].is_empty());
        assert!(marching_cubes_table()[255].is_empty());
    }

    #[test]
    fn polyline_segments_close_loops() {
        let p = Polyline { indices: vec![0, 1, 2], closed: true };
        assert_eq!(p.segments().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 0)]);
        let p = Polyline { indices: vec![0, 1], closed: false };
        assert_eq!(p.segments().count(), 1);
    }

    #[test]
    fn saddle_uses_centre_sign() {
        // F = x*y has a saddle at the origin; with a 2-node grid the single
        // cell is ambiguous and F(centre) = 0 counts as non-positive.
        let f = FnField::new(2, 1, |x: &[f64]| vec![x[0] * x[1]], |x: &[f64]| vec![x[1], x[0]]);
        let m = extract_isosurface(&f, &[(-1.0, 1.0), (-1.0, 1.0)], 2, 0.0).unwrap();
        assert_eq!(m.polylines.len(), 2);
    }
}
