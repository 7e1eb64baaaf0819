/// Point-to-point metric for nearest-neighbour queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Sum of absolute differences.
    L1,
    /// Euclidean; compared squared internally.
    L2,
}

impl Metric {
    /// The value compared during search (`L2` is squared).
    fn key(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }

    fn axis_key(self, diff: f64) -> f64 {
        match self {
            Metric::L1 => diff.abs(),
            Metric::L2 => diff * diff,
        }
    }

    fn finish(self, key: f64) -> f64 {
        match self {
            Metric::L1 => key,
            Metric::L2 => key.sqrt(),
        }
    }

    /// Distance between two points.
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        self.finish(self.key(a, b))
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a flat row-major point array. Queries are exact and
/// break distance ties towards the lowest point index, matching a linear scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(dim: usize, points: Vec<f64>) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "point array shape");
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.dim;
        let mut axis = 0;
        let mut widest = f64::NEG_INFINITY;
        for a in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.points[i * d + a];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * d + axis].total_cmp(&pts[b * d + axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] * d + axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Nearest point to `q`: `(distance, index)`. `None` for an empty tree.
    pub fn nearest(&self, q: &[f64], metric: Metric) -> Option<(f64, usize)> {
        assert_eq!(q.len(), self.dim, "query dimension");
        if self.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, q, metric, &mut best);
        Some((metric.finish(best.0), best.1))
    }

    fn search(&self, node: usize, q: &[f64], metric: Metric, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let k = metric.key(q, self.point(i));
                    if k < best.0 || (k == best.0 && i < best.1) {
                        *best = (k, i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, metric, best);
                if metric.axis_key(diff) <= best.0 {
                    self.search(far, q, metric, best);
                }
            }
        }
    }
}

/// Linear-scan reference for [`KdTree::nearest`].
pub fn brute_nearest(points: &[f64], dim: usize, q: &[f64], metric: Metric) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let k = metric.key(q, p);
        if best.map_or(true, |b| k < b.0) {
            best = Some((k, i));
        }
    }
    best.map(|(k, i)| (metric.finish(k), i))
}
