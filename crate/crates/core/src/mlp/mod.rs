//! A small fully connected network engine: forward evaluation, input
//! jacobians and parameter vector-jacobian products, all in `f64`.
//!
//! Parameters are laid out layer-major; inside a layer the `out x in` weight
//! matrix comes first (row-major) followed by the `out` biases. A layer marked
//! `skip` receives the previous activations concatenated with the network
//! input, so its `in` dimension is `prev_out + input_dim`.
//!
//! The ReLU derivative at exactly zero is taken to be zero.

mod checkpoint;
mod sparse;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use sparse::SparseMlp;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Relu,
    Softplus { beta: f64 },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Relu
    }
}

impl Activation {
    pub const DEFAULT_SOFTPLUS_BETA: f64 = 100.0;

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus { beta } => {
                let t = beta * z;
                if t > 30.0 {
                    z
                } else {
                    t.exp().ln_1p() / beta
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { beta } => 1.0 / (1.0 + (-beta * z).exp()),
        }
    }
}

/// One affine layer, `out x in` row-major weights plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub skip: bool,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, skip: bool) -> Self {
        Dense {
            in_dim,
            out_dim,
            skip,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn num_params(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    #[inline]
    fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }
}

/// Layer widths and activation for building a randomly initialized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    /// Hidden-layer indices (>= 1) whose input is concatenated with `x`.
    #[serde(default)]
    pub skip: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            output_dim,
            hidden: hidden.to_vec(),
            skip: Vec::new(),
            activation: Activation::Relu,
        }
    }

    /// Three hidden layers of 512 units.
    pub fn fc1(input_dim: usize, output_dim: usize) -> Self {
        Self::fc1_width(input_dim, output_dim, 512)
    }

    /// FC-1 topology with a configurable hidden width.
    pub fn fc1_width(input_dim: usize, output_dim: usize, width: usize) -> Self {
        Self::new(input_dim, &[width; 3], output_dim)
    }

    /// Seven hidden layers of 509 units, all but the first fed with the input.
    pub fn fc2(input_dim: usize, output_dim: usize) -> Self {
        Self::fc2_width(input_dim, output_dim, 509)
    }

    pub fn fc2_width(input_dim: usize, output_dim: usize, width: usize) -> Self {
        MlpSpec {
            skip: (1..7).collect(),
            ..Self::new(input_dim, &[width; 7], output_dim)
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    fn layer_shapes(&self) -> Result<Vec<(usize, usize, bool)>> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if let Some(&bad) = self.skip.iter().find(|&&s| s == 0 || s >= self.hidden.len()) {
            return Err(Error::Config(format!(
                "skip index {bad} must refer to a hidden layer after the first"
            )));
        }
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for (k, &w) in self.hidden.iter().enumerate() {
            let skip = self.skip.contains(&k);
            let in_dim = if skip { prev + self.input_dim } else { prev };
            shapes.push((in_dim, w, skip));
            prev = w;
        }
        shapes.push((prev, self.output_dim, false));
        Ok(shapes)
    }

    /// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`) and biases uniform
    /// in `+-1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Mlp> {
        let layers = self
            .layer_shapes()?
            .into_iter()
            .map(|(in_dim, out_dim, skip)| {
                let wb = (6.0 / in_dim as f64).sqrt();
                let bb = 1.0 / (in_dim as f64).sqrt();
                let weights = (0..in_dim * out_dim)
                    .map(|_| rng.gen_range(-wb..wb))
                    .collect();
                let bias = (0..out_dim).map(|_| rng.gen_range(-bb..bb)).collect();
                Dense {
                    in_dim,
                    out_dim,
                    skip,
                    weights,
                    bias,
                }
            })
            .collect();
        Mlp::from_layers(self.input_dim, self.activation, layers)
    }
}

/// Flat parameter vector in the documented layer-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(m: usize) -> Self {
        ParamVector(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.0.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        crate::linalg::dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `n x d` block of points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    dim: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("batch dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                what: "batch buffer (multiple of dimension)",
                expected: (data.len() / dim + 1) * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch"));
        }
        Ok(Batch { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim("batch row", dim, r.len())?;
            data.extend_from_slice(r);
        }
        Batch::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-axis `(min, max)`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for r in self.rows() {
            for (bb, &v) in b.iter_mut().zip(r) {
                bb.0 = bb.0.min(v);
                bb.1 = bb.1.max(v);
            }
        }
        b
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input vector seen by each layer (after skip concatenation).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer; the last one is the network output.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }

    /// Smallest absolute hidden pre-activation, useful for keeping finite
    /// difference probes away from ReLU kinks.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let n = self.pre.len();
        self.pre[..n - 1]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    activation: Activation,
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(input_dim: usize, activation: Activation, layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut prev = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if layer.skip && k == 0 {
                return Err(Error::Config("the first layer cannot be a skip layer".into()));
            }
            let expected = if layer.skip { prev + input_dim } else { prev };
            check_dim("layer input", expected, layer.in_dim)?;
            check_dim("layer weights", layer.in_dim * layer.out_dim, layer.weights.len())?;
            check_dim("layer bias", layer.out_dim, layer.bias.len())?;
            prev = layer.out_dim;
        }
        if let Activation::Softplus { beta } = activation {
            if !(beta > 0.0) {
                return Err(Error::Config("softplus beta must be positive".into()));
            }
        }
        Ok(Mlp {
            input_dim,
            activation,
            layers,
        })
    }

    /// Single affine layer `F(x) = W x + b`.
    pub fn affine(weights: &Matrix, bias: &[f64]) -> Result<Self> {
        check_dim("affine bias", weights.rows(), bias.len())?;
        let layer = Dense {
            in_dim: weights.cols(),
            out_dim: weights.rows(),
            skip: false,
            weights: weights.as_slice().to_vec(),
            bias: bias.to_vec(),
        };
        Mlp::from_layers(weights.cols(), Activation::Relu, vec![layer])
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        ParamVector(v)
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        check_dim("parameter vector", self.num_params(), params.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params.0[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params.0[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn with_params(&self, params: &ParamVector) -> Result<Mlp> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    /// Apply `f` to every parameter in layout order.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                f(i, w);
                i += 1;
            }
        }
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_dim, "input dimension");
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (k, layer) in self.layers.iter().enumerate() {
            let input: Vec<f64> = if k == 0 {
                x.to_vec()
            } else {
                let mut h: Vec<f64> = pre[k - 1].iter().map(|&z| self.activation.apply(z)).collect();
                if layer.skip {
                    h.extend_from_slice(x);
                }
                h
            };
            let z: Vec<f64> = (0..layer.out_dim)
                .map(|i| layer.bias[i] + crate::linalg::dot(layer.weight_row(i), &input))
                .collect();
            inputs.push(input);
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// `F(x)` for one point.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut t = self.trace(x);
        t.pre.pop().unwrap()
    }

    pub fn forward(&self, batch: &Batch) -> Result<Matrix> {
        check_dim("batch columns", self.input_dim, batch.dim())?;
        let l = self.output_dim();
        let mut data = Vec::with_capacity(batch.len() * l);
        for x in batch.rows() {
            data.extend(self.eval(x));
        }
        Matrix::from_vec(batch.len(), l, data)
    }

    /// Reverse pass for a single output cotangent. Parameter gradients are
    /// added into `grad_params`, input gradients into `grad_input`.
    pub fn backward(
        &self,
        trace: &Trace,
        cotangent: &[f64],
        mut grad_params: Option<&mut [f64]>,
        mut grad_input: Option<&mut [f64]>,
    ) {
        assert_eq!(cotangent.len(), self.output_dim(), "cotangent length");
        let d = self.input_dim;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        let mut g = cotangent.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.inputs[k];
            if let Some(gp) = grad_params.as_deref_mut() {
                let base = offsets[k];
                let nw = layer.weights.len();
                for (i, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    let row = &mut gp[base + i * layer.in_dim..base + (i + 1) * layer.in_dim];
                    for (r, &inp) in row.iter_mut().zip(input) {
                        *r += gi * inp;
                    }
                    gp[base + nw + i] += gi;
                }
            }
            if k == 0 && grad_input.is_none() {
                break;
            }
            let mut gin = vec![0.0; layer.in_dim];
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                for (a, &w) in gin.iter_mut().zip(layer.weight_row(i)) {
                    *a += gi * w;
                }
            }
            if k == 0 {
                if let Some(gx) = grad_input.as_deref_mut() {
                    for (a, b) in gx.iter_mut().zip(&gin) {
                        *a += b;
                    }
                }
                break;
            }
            if layer.skip {
                let split = layer.in_dim - d;
                if let Some(gx) = grad_input.as_deref_mut() {
                    for (a, b) in gx.iter_mut().zip(&gin[split..]) {
                        *a += b;
                    }
                }
                gin.truncate(split);
            }
            let prev_pre = &trace.pre[k - 1];
            for (a, &z) in gin.iter_mut().zip(prev_pre) {
                *a *= self.activation.derivative(z);
            }
            g = gin;
        }
    }

    /// `l x d` input jacobian at one point, plus the value.
    pub fn eval_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.trace(x);
        let l = self.output_dim();
        let d = self.input_dim;
        let mut jac = vec![0.0; l * d];
        let mut e = vec![0.0; l];
        for k in 0..l {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            self.backward(&t, &e, None, Some(&mut jac[k * d..(k + 1) * d]));
        }
        (t.output().to_vec(), jac)
    }

    pub fn jacobian_input(&self, batch: &Batch) -> Result<Vec<Matrix>> {
        check_dim("batch columns", self.input_dim, batch.dim())?;
        batch
            .rows()
            .map(|x| Matrix::from_vec(self.output_dim(), self.input_dim, self.eval_jacobian(x).1))
            .collect()
    }

    /// `cotangent^T D_theta F(x)` as a flat parameter vector.
    pub fn vjp_params(&self, x: &[f64], cotangent: &[f64]) -> Result<ParamVector> {
        check_dim("input", self.input_dim, x.len())?;
        check_dim("cotangent", self.output_dim(), cotangent.len())?;
        let mut g = ParamVector::zeros(self.num_params());
        let t = self.trace(x);
        self.backward(&t, cotangent, Some(&mut g.0), None);
        Ok(g)
    }

    /// Parameter and input cotangent products from one reverse pass.
    pub fn vjp(&self, x: &[f64], cotangent: &[f64]) -> (ParamVector, Vec<f64>) {
        let mut g = ParamVector::zeros(self.num_params());
        let mut gx = vec![0.0; self.input_dim];
        let t = self.trace(x);
        self.backward(&t, cotangent, Some(&mut g.0), Some(&mut gx));
        (g, gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line evaluator written without the trace machinery.
    fn reference_eval(m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = m.layers().len();
        for (k, layer) in m.layers().iter().enumerate() {
            let mut input = h.clone();
            if layer.skip {
                input.extend_from_slice(x);
            }
            let mut out = vec![0.0; layer.out_dim];
            for i in 0..layer.out_dim {
                let mut s = 0.0;
                for j in 0..layer.in_dim {
                    s += layer.weights[i * layer.in_dim + j] * input[j];
                }
                out[i] = s + layer.bias[i];
                if k + 1 < n {
                    out[i] = m.activation().apply(out[i]);
                }
            }
            h = out;
        }
        h
    }

    #[test]
    fn affine_layer_evaluates_directly() {
        let w = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let m = Mlp::affine(&w, &[0.0, 0.0]).unwrap();
        assert_eq!(m.eval(&[1.0, 1.0]), vec![2.0, 3.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = MlpSpec::new(3, &[5, 4], 2).init(&mut rng).unwrap();
        let mut p = m.params();
        let last = m.layers().last().unwrap().clone();
        let nb = last.bias.len();
        let len = p.len();
        for v in &mut p.0[..len - nb] {
            *v = 0.0;
        }
        p.0[len - 2] = 0.7;
        p.0[len - 1] = -1.5;
        m.set_params(&p).unwrap();
        assert_eq!(m.eval(&[4.0, -2.0, 9.0]), vec![0.7, -1.5]);
    }

    #[test]
    fn fc1_matches_reference_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MlpSpec::fc1_width(2, 1, 48).init(&mut rng).unwrap();
        let skip = MlpSpec::fc2_width(3, 2, 16).init(&mut rng).unwrap();
        for net in [&m, &skip] {
            for _ in 0..20 {
                let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = net.eval(&x);
                let b = reference_eval(net, &x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
                }
            }
        }
    }

    #[test]
    fn parameter_count_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = MlpSpec::fc2_width(3, 1, 10);
        let m = spec.init(&mut rng).unwrap();
        // 3->10, (10+3)->10 x6, 10->1
        assert_eq!(m.num_params(), 10 * 4 + 6 * 10 * 14 + 11);
        let p = m.params();
        let back = m.with_params(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn dead_relu_gives_zero_jacobian_row() {
        let layers = vec![
            Dense {
                in_dim: 2,
                out_dim: 1,
                skip: false,
                weights: vec![1.0, 1.0],
                bias: vec![0.0],
            },
            Dense {
                in_dim: 1,
                out_dim: 1,
                skip: false,
                weights: vec![1.0],
                bias: vec![0.0],
            },
        ];
        let m = Mlp::from_layers(2, Activation::Relu, layers).unwrap();
        let (_, j) = m.eval_jacobian(&[-1.0, -2.0]);
        assert_eq!(j, vec![0.0, 0.0]);
        // subgradient at the kink is zero
        let (_, j0) = m.eval_jacobian(&[1.0, -1.0]);
        assert_eq!(j0, vec![0.0, 0.0]);
    }

    #[test]
    fn affine_vjp_is_outer_product() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let m = Mlp::affine(&w, &[0.5, -0.5]).unwrap();
        let x = [0.3, -1.2, 2.0];
        let g = m.vjp_params(&x, &[0.0, 1.0]).unwrap();
        assert_eq!(&g.0[..3], &[0.0; 3]);
        assert_eq!(&g.0[3..6], &x);
        assert_eq!(&g.0[6..], &[0.0, 1.0]);
        let z = m.vjp_params(&x, &[0.0, 0.0]).unwrap();
        assert!(z.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpSpec::new(2, &[4], 1).init(&mut rng).unwrap();
        let b = Batch::new(3, vec![0.0; 6]).unwrap();
        match m.forward(&b) {
            Err(Error::DimensionMismatch { expected, actual, .. }) => {
                assert_eq!((expected, actual), (2, 3))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Batch::new(2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn spec_rejects_bad_skip_indices() {
        let mut spec = MlpSpec::new(2, &[4, 4], 1);
        spec.skip = vec![0];
        assert!(spec.init(&mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
