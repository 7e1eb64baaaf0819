use std::io::Write;

use rand::Rng;

use super::{eval_f, PlSurface, SignVectorSet};
use crate::error::{check_dim, Error, Result};
use crate::mlp::{Activation, Dense, Mlp, SparseMlp};
use crate::rng;

/// Largest `|Lambda| * k` accepted by [`compile_to_mlp`]. Hidden layers are
/// dense, so the second layer holds roughly `8 (|Lambda| k)^2` weights.
pub const MAX_COMPILE_TERMS: usize = 2048;

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `max{a, b} = relu(a - b)/2 + relu(b - a)/2 + (a + b)/2`.
pub fn gadget_max(a: f64, b: f64) -> f64 {
    relu(a - b) / 2.0 + relu(b - a) / 2.0 + (a + b) / 2.0
}

/// `min{a, b} = (a + b)/2 - relu(a - b)/2 - relu(b - a)/2`.
pub fn gadget_min(a: f64, b: f64) -> f64 {
    (a + b) / 2.0 - relu(a - b) / 2.0 - relu(b - a) / 2.0
}

/// Maximum over a nonempty slice by a balanced tree of [`gadget_max`],
/// pairing neighbours level by level as the compiled network does.
pub fn tree_max(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "tree_max of an empty slice");
    let mut cur = values.to_vec();
    while cur.len() > 1 {
        cur = cur
            .chunks(2)
            .map(|c| if c.len() == 2 { gadget_max(c[0], c[1]) } else { c[0] })
            .collect();
    }
    cur[0]
}

#[derive(Clone, Copy)]
enum Op {
    Min,
    Max,
}

/// A value carried between layers as an affine function of the current
/// layer input.
#[derive(Clone)]
struct Affine {
    row: Vec<f64>,
    bias: f64,
}

impl Affine {
    fn combine(&self, sa: f64, other: &Affine, sb: f64) -> Affine {
        Affine {
            row: self.row.iter().zip(&other.row).map(|(x, y)| sa * x + sb * y).collect(),
            bias: sa * self.bias + sb * other.bias,
        }
    }

    fn scaled(&self, s: f64) -> Affine {
        Affine {
            row: self.row.iter().map(|x| s * x).collect(),
            bias: s * self.bias,
        }
    }
}

/// One hidden layer that reduces every group pairwise. A pair `(a, b)` uses
/// units `relu(a-b), relu(b-a), relu(a+b), relu(-a-b)`; the last two carry
/// `a + b` through the activation. An unpaired value passes as
/// `relu(a) - relu(-a)`.
fn reduce_level(values: &[Affine], groups: &[Vec<usize>], op: Op) -> (Dense, Vec<Affine>, Vec<Vec<usize>>) {
    let in_dim = values[0].row.len();
    let mut units: Vec<Affine> = Vec::new();
    let mut combos: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut next_groups = Vec::with_capacity(groups.len());
    for g in groups {
        let mut ng = Vec::with_capacity(g.len().div_ceil(2));
        for pair in g.chunks(2) {
            let base = units.len();
            let a = &values[pair[0]];
            if let [_, j] = pair {
                let b = &values[*j];
                units.push(a.combine(1.0, b, -1.0));
                units.push(a.combine(-1.0, b, 1.0));
                units.push(a.combine(1.0, b, 1.0));
                units.push(a.combine(-1.0, b, -1.0));
                let spread = match op {
                    Op::Max => 0.5,
                    Op::Min => -0.5,
                };
                combos.push(vec![(base, spread), (base + 1, spread), (base + 2, 0.5), (base + 3, -0.5)]);
            } else {
                units.push(a.clone());
                units.push(a.scaled(-1.0));
                combos.push(vec![(base, 1.0), (base + 1, -1.0)]);
            }
            ng.push(combos.len() - 1);
        }
        next_groups.push(ng);
    }
    let layer = Dense {
        in_dim,
        out_dim: units.len(),
        skip: false,
        weights: units.iter().flat_map(|u| u.row.iter().copied()).collect(),
        bias: units.iter().map(|u| u.bias).collect(),
    };
    let width = units.len();
    let next_values = combos
        .into_iter()
        .map(|c| {
            let mut row = vec![0.0; width];
            for (u, w) in c {
                row[u] = w;
            }
            Affine { row, bias: 0.0 }
        })
        .collect();
    (layer, next_values, next_groups)
}

/// ReLU network computing [`eval_f`]: a first affine map producing every
/// `lambda_i h_i(x)`, balanced min trees per sign vector, then a balanced max
/// tree across sign vectors. Affine maps between trees are folded into the
/// following layer, so every hidden layer is a ReLU layer.
pub fn compile_to_mlp(surface: &PlSurface, lambda: &SignVectorSet) -> Result<Mlp> {
    let k = surface.planes().len();
    check_dim("sign vector length", k, lambda.num_planes())?;
    let terms = lambda.len() * k;
    if terms > MAX_COMPILE_TERMS {
        return Err(Error::Budget(format!(
            "{} sign vectors x {k} planes = {terms} terms exceeds {MAX_COMPILE_TERMS}",
            lambda.len()
        )));
    }
    let mut values = Vec::with_capacity(terms);
    let mut groups = Vec::with_capacity(lambda.len());
    for l in lambda.vectors() {
        let mut g = Vec::with_capacity(k);
        for (s, p) in l.iter().zip(surface.planes()) {
            let s = *s as f64;
            g.push(values.len());
            values.push(Affine {
                row: p.normal.iter().map(|v| s * v).collect(),
                bias: s * p.offset,
            });
        }
        groups.push(g);
    }
    let mut layers = Vec::new();
    while groups[0].len() > 1 {
        let (layer, v, g) = reduce_level(&values, &groups, Op::Min);
        layers.push(layer);
        values = v;
        groups = g;
    }
    let mut top = vec![groups.into_iter().map(|g| g[0]).collect::<Vec<_>>()];
    while top[0].len() > 1 {
        let (layer, v, g) = reduce_level(&values, &top, Op::Max);
        layers.push(layer);
        values = v;
        top = g;
    }
    let out = &values[top[0][0]];
    layers.push(Dense {
        in_dim: out.row.len(),
        out_dim: 1,
        skip: false,
        weights: out.row.clone(),
        bias: vec![out.bias],
    });
    Mlp::from_layers(surface.dim(), Activation::Relu, layers)
}

/// Agreement of a compiled network with the max-min formula and the
/// membership oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub points: usize,
    /// `max |F(x) - f(x)| / (1 + |f(x)|)` over the random points.
    pub max_rel_diff: f64,
    /// `max |F(x) - f(x)|` over the same points.
    pub max_abs_diff: f64,
    /// Points with `|f(x)| > 1e-9`, where signs are compared.
    pub sign_checked: usize,
    /// Of those, points where the sign of `F` matches the oracle.
    pub sign_agree: usize,
    pub facet_points: usize,
    pub facet_max_abs: f64,
}

impl VerifyReport {
    pub fn sign_rate(&self) -> f64 {
        if self.sign_checked == 0 {
            1.0
        } else {
            self.sign_agree as f64 / self.sign_checked as f64
        }
    }
}

/// Compares `mlp` with [`eval_f`] on `n` uniform points in the bounding box
/// grown by 10% per side, and evaluates it on facet grids of resolution
/// `per_edge`.
pub fn verify(
    surface: &PlSurface,
    lambda: &SignVectorSet,
    mlp: &Mlp,
    n: usize,
    per_edge: usize,
    seed: u64,
) -> Result<VerifyReport> {
    check_dim("network input", surface.dim(), mlp.input_dim())?;
    check_dim("network output", 1, mlp.output_dim())?;
    let net = SparseMlp::new(mlp);
    let bounds: Vec<(f64, f64)> = surface
        .bounds()
        .into_iter()
        .map(|(lo, hi)| (lo - 0.1 * (hi - lo), hi + 0.1 * (hi - lo)))
        .collect();
    let mut r = rng::seeded(seed);
    let mut rep = VerifyReport {
        points: n,
        max_rel_diff: 0.0,
        max_abs_diff: 0.0,
        sign_checked: 0,
        sign_agree: 0,
        facet_points: 0,
        facet_max_abs: 0.0,
    };
    let mut x = vec![0.0; surface.dim()];
    for _ in 0..n {
        for (v, (lo, hi)) in x.iter_mut().zip(&bounds) {
            *v = r.gen_range(*lo..*hi);
        }
        let f = eval_f(surface, lambda, &x);
        let big_f = net.eval(&x)[0];
        let diff = (big_f - f).abs();
        rep.max_abs_diff = rep.max_abs_diff.max(diff);
        rep.max_rel_diff = rep.max_rel_diff.max(diff / (1.0 + f.abs()));
        if f.abs() > 1e-9 {
            rep.sign_checked += 1;
            if (big_f > 0.0) == surface.contains(&x) {
                rep.sign_agree += 1;
            }
        }
    }
    for p in surface.facet_samples(per_edge) {
        rep.facet_points += 1;
        rep.facet_max_abs = rep.facet_max_abs.max(net.eval(&p)[0].abs());
    }
    Ok(rep)
}

pub fn write_verify_report<W: Write>(rep: &VerifyReport, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "points,max_rel_diff,max_abs_diff,sign_checked,sign_agree,sign_rate,facet_points,facet_max_abs"
    )?;
    writeln!(
        w,
        "{},{:e},{:e},{},{},{:.6},{},{:e}",
        rep.points,
        rep.max_rel_diff,
        rep.max_abs_diff,
        rep.sign_checked,
        rep.sign_agree,
        rep.sign_rate(),
        rep.facet_points,
        rep.facet_max_abs
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pl::{enumerate_lambda, unit_square};

    #[test]
    fn max_gadget_hand_value() {
        assert_eq!(gadget_max(3.0, 5.0), 5.0);
        assert_eq!(gadget_min(3.0, 5.0), 3.0);
    }

    #[test]
    fn square_network_values() {
        let s = unit_square();
        let l = enumerate_lambda(&s).unwrap();
        let m = compile_to_mlp(&s, &l).unwrap();
        assert!((m.eval(&[0.5, 0.5])[0] - 0.5).abs() <= 1e-12);
        assert!((m.eval(&[1.5, 0.5])[0] + 0.5).abs() <= 1e-12);
        for mid in [[0.5, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]] {
            assert!(m.eval(&mid)[0].abs() <= 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = unit_square();
        let l = SignVectorSet::new(vec![vec![-1; 4]; MAX_COMPILE_TERMS / 4 + 1]).unwrap();
        assert!(matches!(compile_to_mlp(&s, &l), Err(Error::Budget(_))));
    }
}
