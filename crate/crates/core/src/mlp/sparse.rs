use super::{Activation, Mlp};
use crate::linalg::dot;

/// Evaluation-only copy of an [`Mlp`] that stores each weight row by its
/// nonzero entries. Outputs match [`Mlp::eval`] up to summation order.
#[derive(Debug, Clone)]
pub struct SparseMlp {
    input_dim: usize,
    activation: Activation,
    layers: Vec<SparseLayer>,
}

#[derive(Debug, Clone)]
struct SparseLayer {
    skip: bool,
    starts: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    bias: Vec<f64>,
}

impl SparseMlp {
    pub fn new(mlp: &Mlp) -> Self {
        let layers = mlp
            .layers()
            .iter()
            .map(|l| {
                let mut starts = vec![0];
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                for i in 0..l.out_dim {
                    for (j, &w) in l.weight_row(i).iter().enumerate() {
                        if w != 0.0 {
                            cols.push(j);
                            vals.push(w);
                        }
                    }
                    starts.push(cols.len());
                }
                SparseLayer {
                    skip: l.skip,
                    starts,
                    cols,
                    vals,
                    bias: l.bias.clone(),
                }
            })
            .collect();
        SparseMlp {
            input_dim: mlp.input_dim(),
            activation: mlp.activation(),
            layers,
        }
    }

    pub fn nonzeros(&self) -> usize {
        self.layers.iter().map(|l| l.vals.len()).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim, "input dimension");
        let mut h = x.to_vec();
        let n = self.layers.len();
        let mut gathered = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.skip {
                h.extend_from_slice(x);
            }
            let mut out = Vec::with_capacity(layer.bias.len());
            for (i, &b) in layer.bias.iter().enumerate() {
                let range = layer.starts[i]..layer.starts[i + 1];
                gathered.clear();
                gathered.extend(layer.cols[range.clone()].iter().map(|&j| h[j]));
                let z = b + dot(&layer.vals[range], &gathered);
                out.push(if k + 1 < n { self.activation.apply(z) } else { z });
            }
            h = out;
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpSpec;
    use crate::rng;

    #[test]
    fn matches_dense_evaluation() {
        let mut r = rng::seeded(3);
        let mut m = MlpSpec::new(3, &[16, 16], 2).init(&mut r).unwrap();
        // Zero out a stripe of weights so the sparse path actually skips.
        m.update_params(|i, w| {
            if i % 3 == 0 {
                *w = 0.0;
            }
        });
        let s = SparseMlp::new(&m);
        assert!(s.nonzeros() < m.num_params());
        for k in 0..50 {
            let x = [k as f64 * 0.1 - 2.5, (k as f64).sin(), 0.3];
            for (a, b) in s.eval(&x).iter().zip(m.eval(&x)) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
