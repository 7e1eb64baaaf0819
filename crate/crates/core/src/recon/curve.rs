use std::collections::HashMap;

use super::kdtree::Metric;
use super::march::{IsoMesh, Polyline};
use crate::error::{check_dim, Error, Result};
use crate::field::Field;
use crate::projection::{project_point, ProjectionConfig, DIVERGENCE_FACTOR};

/// Zero set of a field `R^3 -> R^2` as polylines: Newton projection of grid
/// seeds onto the joint zero set, thinning to two grid cells, then greedy
/// nearest-neighbour chaining within twice the median neighbour spacing.
pub fn extract_curve<F: Field + ?Sized>(field: &F, bounds: &[(f64, f64)], res: usize) -> Result<IsoMesh> {
    check_dim("curve field input", 3, field.input_dim())?;
    check_dim("curve field output", 2, field.output_dim())?;
    check_dim("bounds", 3, bounds.len())?;
    if res < 2 {
        return Err(Error::Config("grid resolution must be >= 2".into()));
    }
    let cell: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / (res - 1) as f64).collect();
    let diag = bounds.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt();
    let cfg = ProjectionConfig::default();
    let inside = |p: &[f64]| p.iter().zip(bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);

    let radius = 2.0 * cell.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut kept: Vec<[f64; 3]> = Vec::new();
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let key = |p: &[f64; 3]| p.map(|v| (v / radius).floor() as i64);
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let seed = [
                    bounds[0].0 + cell[0] * i as f64,
                    bounds[1].0 + cell[1] * j as f64,
                    bounds[2].0 + cell[2] * k as f64,
                ];
                let rec = project_point(field, &seed, &[0.0, 0.0], &cfg, DIVERGENCE_FACTOR * diag);
                if !rec.converged || !inside(&rec.p) {
                    continue;
                }
                let p = [rec.p[0], rec.p[1], rec.p[2]];
                let kp = key(&p);
                let mut close = false;
                'search: for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let nk = [kp[0] + dx, kp[1] + dy, kp[2] + dz];
                            if let Some(list) = buckets.get(&nk) {
                                if list.iter().any(|&q| Metric::L2.dist(&kept[q], &p) < radius) {
                                    close = true;
                                    break 'search;
                                }
                            }
                        }
                    }
                }
                if !close {
                    buckets.entry(kp).or_default().push(kept.len());
                    kept.push(p);
                }
            }
        }
    }
    if kept.len() < 2 {
        log::warn!("curve extraction recovered {} points; empty output", kept.len());
        return Ok(IsoMesh {
            dim: 3,
            level: 0.0,
            vertices: Vec::new(),
            polylines: Vec::new(),
            triangles: Vec::new(),
        });
    }
    let vertices: Vec<Vec<f64>> = kept.iter().map(|p| p.to_vec()).collect();
    let polylines = chain_points(&vertices);
    Ok(IsoMesh {
        dim: 3,
        level: 0.0,
        vertices,
        polylines,
        triangles: Vec::new(),
    })
}

/// Greedy chaining: start at an unvisited point, repeatedly step to the
/// nearest unvisited point within the threshold, extending first forwards
/// and then backwards from the start.
fn chain_points(pts: &[Vec<f64>]) -> Vec<Polyline> {
    let n = pts.len();
    let dist = |a: usize, b: usize| Metric::L2.dist(&pts[a], &pts[b]);
    let nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut sorted = nn.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = 2.0 * sorted[n / 2];
    let mut visited = vec![false; n];
    let nearest_unvisited = |from: usize, visited: &[bool]| {
        (0..n)
            .filter(|&j| !visited[j])
            .map(|j| (dist(from, j), j))
            .filter(|&(d, _)| d <= threshold)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, j)| j)
    };
    let mut out = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut fwd = vec![start];
        while let Some(j) = nearest_unvisited(*fwd.last().unwrap(), &visited) {
            visited[j] = true;
            fwd.push(j);
        }
        let mut back = Vec::new();
        let mut cur = start;
        while let Some(j) = nearest_unvisited(cur, &visited) {
            visited[j] = true;
            back.push(j);
            cur = j;
        }
        back.reverse();
        back.extend(fwd);
        if back.len() < 2 {
            continue;
        }
        let closed = back.len() > 2 && dist(back[0], *back.last().unwrap()) <= threshold;
        out.push(Polyline { indices: back, closed });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn unit_circle_as_intersection() {
        let f = FnField::new(
            3,
            2,
            |x: &[f64]| vec![x[2], x[0] * x[0] + x[1] * x[1] - 1.0],
            |x: &[f64]| vec![0.0, 0.0, 1.0, 2.0 * x[0], 2.0 * x[1], 0.0],
        );
        let b = [(-1.5, 1.5), (-1.5, 1.5), (-0.5, 0.5)];
        let m = extract_curve(&f, &b, 12).unwrap();
        assert!(m.vertices.len() > 20);
        for v in &m.vertices {
            let val = f.eval(v);
            assert!(val[0].abs() <= 1e-6 && val[1].abs() <= 1e-6);
        }
        assert_eq!(m.polylines.len(), 1);
        assert!(m.polylines[0].closed);
    }

    #[test]
    fn disjoint_zero_sets_give_empty_output() {
        let f = FnField::new(
            3,
            2,
            |x: &[f64]| vec![x[0] - 5.0, x[0] + 5.0],
            |_: &[f64]| vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        );
        let m = extract_curve(&f, &[(-1.0, 1.0); 3], 4).unwrap();
        assert!(m.is_empty());
    }
}
