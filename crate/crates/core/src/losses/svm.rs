//! Geometric SVM: hinge on the input-space distance to the decision boundary
//! measured in units of the gap between adjacent level sets, plus a power of
//! that gap as regularizer.

use serde::{Deserialize, Serialize};

use super::{sign_pos, DistNorm, LossOutput, Ramp};
use crate::data::LabeledBatch;
use crate::error::{check_dim, Error, Result};
use crate::field::{num_classes, Field, MarginView};
use crate::linalg::sub;
use crate::mlp::Mlp;
use crate::projection::{project_point, step_limit, ProjectionConfig};
use crate::sample::SampleHandle;

use super::baseline::logit_cross_entropy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub dist_norm: DistNorm,
    pub lambda_schedule: Option<Ramp>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 0.001,
            alpha: -1.0,
            dist_norm: DistNorm::Linf,
            lambda_schedule: None,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("svm lambda must be >= 0".into()));
        }
        if let Some(r) = &self.lambda_schedule {
            r.validate()?;
        }
        Ok(())
    }

    pub fn lambda_at(&self, epoch: usize) -> f64 {
        self.lambda_schedule.map_or(self.lambda, |r| r.at(epoch))
    }
}

#[derive(Debug, Clone)]
enum SvmItem {
    Geometric {
        zero: SampleHandle,
        /// Samples on the `-1` and `+1` level sets.
        sides: [Option<SampleHandle>; 2],
    },
    Fallback,
}

/// Frozen handles for one batch.
#[derive(Debug, Clone)]
pub struct PreparedSvm {
    items: Vec<SvmItem>,
}

fn check_binary(mlp: &Mlp) -> Result<()> {
    if num_classes(mlp) != 2 {
        return Err(Error::Config(format!(
            "geometric svm needs a binary classifier, got {} classes",
            num_classes(mlp)
        )));
    }
    Ok(())
}

/// Project each example onto the zero level set and that sample onto the
/// `+-1` level sets. Examples whose zero-set projection fails, or where
/// neither side converges, fall back to cross-entropy.
pub fn prepare_svm(mlp: &Mlp, data: &LabeledBatch, proj: &ProjectionConfig) -> Result<PreparedSvm> {
    check_binary(mlp)?;
    check_dim("input", mlp.input_dim(), data.dim())?;
    proj.validate()?;
    let view = MarginView::new(mlp, 1)?;
    let max_step = step_limit(proj, &data.x);
    let items = data
        .x
        .rows()
        .map(|x| {
            let rec0 = project_point(&view, x, &[0.0], proj, max_step);
            let zero = match (rec0.converged, SampleHandle::from_record(&rec0)) {
                (true, Some(h)) => h,
                _ => return SvmItem::Fallback,
            };
            let sides = [-1.0, 1.0].map(|t| {
                let rec = project_point(&view, &rec0.p, &[t], proj, max_step);
                match rec.converged {
                    true => SampleHandle::from_record(&rec).filter(|h| h.point() != zero.point()),
                    false => None,
                }
            });
            if sides.iter().all(Option::is_none) {
                SvmItem::Fallback
            } else {
                SvmItem::Geometric { zero, sides }
            }
        })
        .collect();
    Ok(PreparedSvm { items })
}

impl PreparedSvm {
    pub fn fallbacks(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, SvmItem::Fallback))
            .count()
    }

    /// Loss and gradient at `mlp`'s parameters through the frozen handles.
    pub fn evaluate(&self, mlp: &Mlp, data: &LabeledBatch, cfg: &SvmConfig, lambda: f64) -> Result<LossOutput> {
        check_binary(mlp)?;
        check_dim("prepared batch", self.items.len(), data.len())?;
        if data.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let view = MarginView::new(mlp, 1)?;
        let n = data.len() as f64;
        let norm = cfg.dist_norm;
        let mut out = LossOutput::zeros(mlp.num_params());
        let (mut hinge_sum, mut reg_sum, mut xent_sum) = (0.0, 0.0, 0.0);
        for (i, item) in self.items.iter().enumerate() {
            let x = data.x.row(i);
            let (zero, sides) = match item {
                SvmItem::Geometric { zero, sides } => (zero, sides),
                SvmItem::Fallback => {
                    let t = mlp.trace(x);
                    let (v, mut g) = logit_cross_entropy(t.output(), data.labels[i]);
                    g.iter_mut().for_each(|c| *c /= n);
                    mlp.backward(&t, &g, Some(&mut out.grad.0), None);
                    xent_sum += v;
                    out.fallbacks += 1;
                    continue;
                }
            };
            let p0 = zero.position(&view)?;
            let mut best: Option<(f64, Vec<f64>, &SampleHandle)> = None;
            for h in sides.iter().flatten() {
                let pt = h.position(&view)?;
                let gap = norm.norm(&sub(&p0, &pt));
                if best.as_ref().map_or(true, |b| gap < b.0) {
                    best = Some((gap, pt, h));
                }
            }
            let (gap, pt, side) = best.expect("prepared item has a side sample");
            if !(gap > 0.0) || !gap.is_finite() {
                return Err(Error::Numerical(format!("level-set gap {gap} at example {i}")));
            }
            let s = sign_pos(data.sign(i) * view.eval(x)[0]);
            let to_x = sub(&p0, x);
            let dist = norm.norm(&to_x);
            let hinge = 1.0 - s * dist / gap;
            let reg = lambda * gap.powf(cfg.alpha);
            let mut d_dist = 0.0;
            let mut d_gap = lambda * cfg.alpha * gap.powf(cfg.alpha - 1.0);
            if hinge > 0.0 {
                hinge_sum += hinge;
                d_dist = -s / gap;
                d_gap += s * dist / (gap * gap);
            }
            reg_sum += reg;
            let g_dist = norm.grad(&to_x);
            let g_gap = norm.grad(&sub(&p0, &pt));
            let cot0: Vec<f64> = g_dist
                .iter()
                .zip(&g_gap)
                .map(|(a, b)| (d_dist * a + d_gap * b) / n)
                .collect();
            let cot_t: Vec<f64> = g_gap.iter().map(|b| -d_gap * b / n).collect();
            zero.grad_into(&view, &cot0, &mut out.grad.0);
            side.grad_into(&view, &cot_t, &mut out.grad.0);
        }
        out.value = (hinge_sum + reg_sum + xent_sum) / n;
        out.terms = vec![
            ("hinge", hinge_sum / n),
            ("margin_reg", reg_sum / n),
            ("xent_fallback", xent_sum / n),
        ];
        Ok(out)
    }
}
