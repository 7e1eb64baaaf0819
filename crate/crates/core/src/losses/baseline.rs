use super::LossOutput;
use crate::data::LabeledBatch;
use crate::error::{check_dim, Error, Result};
use crate::field::{num_classes, MarginView};
use crate::linalg::dot;
use crate::mlp::{Mlp, ParamVector};

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_label(mlp: &Mlp, class: usize) -> Result<()> {
    let classes = num_classes(mlp);
    if class >= classes {
        return Err(Error::InvalidLabel {
            label: class as i64,
            classes,
        });
    }
    Ok(())
}

/// Cross-entropy of one logit vector and its gradient in logit space. A
/// single logit is a binary logistic model with class 1 on the positive side.
pub fn logit_cross_entropy(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    if logits.len() == 1 {
        let f = logits[0];
        return if class == 1 {
            (softplus(-f), vec![-sigmoid(-f)])
        } else {
            (softplus(f), vec![sigmoid(f)])
        };
    }
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - mx).exp()).sum();
    let lse = mx + sum.ln();
    let mut g: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
    g[class] -= 1.0;
    (lse - logits[class], g)
}

/// Value and gradients of the class margin `F^j(x) = f_j - max_{i != j} f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLogit {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_params: ParamVector,
}

pub fn margin_logit(mlp: &Mlp, x: &[f64], class: usize) -> Result<MarginLogit> {
    check_dim("input", mlp.input_dim(), x.len())?;
    let view = MarginView::new(mlp, class)?;
    let t = mlp.trace(x);
    let sel = view.selector(t.output());
    let mut gp = ParamVector::zeros(mlp.num_params());
    let mut gx = vec![0.0; mlp.input_dim()];
    mlp.backward(&t, &sel, Some(&mut gp.0), Some(&mut gx));
    Ok(MarginLogit {
        value: view.value_from_logits(t.output()),
        grad_x: gx,
        grad_params: gp,
    })
}

/// Mean softmax (or logistic, for scalar nets) cross-entropy.
pub fn cross_entropy(mlp: &Mlp, data: &LabeledBatch) -> Result<LossOutput> {
    check_dim("input", mlp.input_dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let n = data.len() as f64;
    let mut out = LossOutput::zeros(mlp.num_params());
    for i in 0..data.len() {
        let class = data.labels[i];
        check_label(mlp, class)?;
        let t = mlp.trace(data.x.row(i));
        let (v, mut g) = logit_cross_entropy(t.output(), class);
        g.iter_mut().for_each(|c| *c /= n);
        mlp.backward(&t, &g, Some(&mut out.grad.0), None);
        out.value += v / n;
    }
    out.terms.push(("xent", out.value));
    Ok(out)
}

/// Mean output-space hinge `max{0, 1 - F^y(x)}`.
pub fn output_hinge(mlp: &Mlp, data: &LabeledBatch) -> Result<LossOutput> {
    check_dim("input", mlp.input_dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let n = data.len() as f64;
    let mut out = LossOutput::zeros(mlp.num_params());
    for i in 0..data.len() {
        let view = MarginView::new(mlp, data.labels[i])?;
        let t = mlp.trace(data.x.row(i));
        let h = 1.0 - view.value_from_logits(t.output());
        if h > 0.0 {
            out.value += h / n;
            let cot: Vec<f64> = view.selector(t.output()).iter().map(|s| -s / n).collect();
            mlp.backward(&t, &cot, Some(&mut out.grad.0), None);
        }
    }
    out.terms.push(("hinge", out.value));
    Ok(out)
}

/// `(1/N) sum max{0, 1 - y_j (w^T x_j + b)} + lambda ||w||^2` for `+-1`
/// labels `ys`.
pub fn soft_svm_affine(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let n = xs.len() as f64;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    hinge / n + lambda * dot(w, w)
}
