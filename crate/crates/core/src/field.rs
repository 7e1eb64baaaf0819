//! Vector fields `F: R^d -> R^l` whose level sets are sampled and controlled.
//!
//! [`Field`] is all the projection machinery needs (values and input
//! jacobians). [`ParamField`] adds parameter cotangent products, which is what
//! the sample network and the training losses differentiate through.

use crate::error::{Error, Result};
use crate::mlp::Mlp;

pub trait Field {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    /// Value and row-major `l x d` jacobian.
    fn eval_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
}

pub trait ParamField: Field {
    fn num_params(&self) -> usize;
    /// Adds `cotangent^T D_theta F(x)` into `out`.
    fn vjp_params_into(&self, x: &[f64], cotangent: &[f64], out: &mut [f64]);
}

impl Field for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        Mlp::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        Mlp::eval(self, x)
    }

    fn eval_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        Mlp::eval_jacobian(self, x)
    }
}

impl ParamField for Mlp {
    fn num_params(&self) -> usize {
        Mlp::num_params(self)
    }

    fn vjp_params_into(&self, x: &[f64], cotangent: &[f64], out: &mut [f64]) {
        let t = self.trace(x);
        self.backward(&t, cotangent, Some(out), None);
    }
}

/// Number of classes a network represents: one scalar output means a binary
/// classifier with class 1 on the positive side.
pub fn num_classes(mlp: &Mlp) -> usize {
    match mlp.output_dim() {
        1 => 2,
        l => l,
    }
}

/// Class index of a `+-1` binary label.
pub fn binary_class(y: f64) -> usize {
    if y > 0.0 {
        1
    } else {
        0
    }
}

/// The scalar decision function of class `j`, `f_j - max_{i != j} f_i`.
/// Ties in the max go to the lowest index. For a scalar network `F` the
/// positive class sees `F` and the negative class `-F`.
#[derive(Debug, Clone, Copy)]
pub struct MarginView<'a> {
    mlp: &'a Mlp,
    class: usize,
}

impl<'a> MarginView<'a> {
    pub fn new(mlp: &'a Mlp, class: usize) -> Result<Self> {
        let classes = num_classes(mlp);
        if class >= classes {
            return Err(Error::InvalidLabel {
                label: class as i64,
                classes,
            });
        }
        Ok(MarginView { mlp, class })
    }

    pub fn mlp(&self) -> &'a Mlp {
        self.mlp
    }

    pub fn class(&self) -> usize {
        self.class
    }

    /// Output-space cotangent `e_j - e_k` selecting the active pair, given
    /// logits evaluated at the current parameters.
    pub fn selector(&self, logits: &[f64]) -> Vec<f64> {
        if logits.len() == 1 {
            return vec![if self.class == 1 { 1.0 } else { -1.0 }];
        }
        let mut sel = vec![0.0; logits.len()];
        sel[self.class] = 1.0;
        sel[runner_up(logits, self.class)] -= 1.0;
        sel
    }

    pub fn value_from_logits(&self, logits: &[f64]) -> f64 {
        margin_from_logits(logits, self.class)
    }
}

/// Index of the largest logit other than `class`, lowest index on ties.
pub fn runner_up(logits: &[f64], class: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in logits.iter().enumerate() {
        if i == class {
            continue;
        }
        if best == usize::MAX || v > logits[best] {
            best = i;
        }
    }
    best
}

/// `f_j - max_{i != j} f_i` for a logit vector; for a single logit `F` it is
/// `F` for class 1 and `-F` for class 0.
pub fn margin_from_logits(logits: &[f64], class: usize) -> f64 {
    if logits.len() == 1 {
        return if class == 1 { logits[0] } else { -logits[0] };
    }
    logits[class] - logits[runner_up(logits, class)]
}

impl Field for MarginView<'_> {
    fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![self.value_from_logits(&self.mlp.eval(x))]
    }

    fn eval_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.mlp.trace(x);
        let sel = self.selector(t.output());
        let mut g = vec![0.0; self.mlp.input_dim()];
        self.mlp.backward(&t, &sel, None, Some(&mut g));
        (vec![self.value_from_logits(t.output())], g)
    }
}

impl ParamField for MarginView<'_> {
    fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn vjp_params_into(&self, x: &[f64], cotangent: &[f64], out: &mut [f64]) {
        let t = self.mlp.trace(x);
        let sel: Vec<f64> = self
            .selector(t.output())
            .into_iter()
            .map(|s| s * cotangent[0])
            .collect();
        self.mlp.backward(&t, &sel, Some(out), None);
    }
}

/// A field given by closures, for analytic test functions.
pub struct FnField<F, J> {
    input_dim: usize,
    output_dim: usize,
    value: F,
    jacobian: J,
}

impl<F, J> FnField<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(input_dim: usize, output_dim: usize, value: F, jacobian: J) -> Self {
        FnField {
            input_dim,
            output_dim,
            value,
            jacobian,
        }
    }
}

impl<F, J> Field for FnField<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<f64>,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.value)(x)
    }

    fn eval_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        ((self.value)(x), (self.jacobian)(x))
    }
}
