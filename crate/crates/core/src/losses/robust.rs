//! Adversarial margin loss: a hinge at `eps` on the single-axis distance
//! between an example and a boundary sample of its class.

use serde::{Deserialize, Serialize};

use super::{argmax_abs, sign0, sign_pos, LossOutput};
use crate::data::LabeledBatch;
use crate::error::{check_dim, Error, Result};
use crate::field::{Field, MarginView};
use crate::mlp::Mlp;
use crate::projection::{
    project_false_position, project_point, step_limit, ProjectionConfig, ProjectionRecord,
    FALSE_POSITION_ITERS,
};
use crate::sample::SampleHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    pub eps_train: f64,
    pub lambda_correct: f64,
    pub lambda_incorrect: f64,
    /// L-infinity radius of the sign-gradient probe used when Newton fails.
    pub probe_radius: f64,
    pub probe_steps: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            eps_train: 0.3,
            lambda_correct: 1.0,
            lambda_incorrect: 1.0,
            probe_radius: 1.0,
            probe_steps: 40,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_train > 0.0) {
            return Err(Error::Config("eps_train must be > 0".into()));
        }
        if !(self.probe_radius > 0.0) || self.probe_steps == 0 {
            return Err(Error::Config("probe radius and steps must be positive".into()));
        }
        Ok(())
    }
}

/// `|x_i - p_i|` on the axis `i` of the largest `|grad_i|` (lowest index on
/// ties), together with that axis.
pub fn axis_distance(x: &[f64], p: &[f64], grad: &[f64]) -> (f64, usize) {
    let i = argmax_abs(grad).expect("nonempty gradient");
    ((x[i] - p[i]).abs(), i)
}

#[derive(Debug, Clone)]
struct RobustItem {
    handle: SampleHandle,
    axis: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedRobust {
    items: Vec<Option<RobustItem>>,
}

/// Sign-gradient walk on the class margin towards its sign change, inside
/// the L-infinity ball of `radius` around `x`.
fn probe<F: Field>(view: &F, x: &[f64], radius: f64, steps: usize) -> Option<Vec<f64>> {
    let f0 = view.eval(x)[0];
    let dir = -sign_pos(f0);
    let step = 2.5 * radius / steps as f64;
    let mut z = x.to_vec();
    for _ in 0..steps {
        let (v, g) = view.eval_jacobian(&z);
        if sign_pos(v[0]) != sign_pos(f0) {
            return Some(z);
        }
        for ((zi, gi), xi) in z.iter_mut().zip(&g).zip(x) {
            *zi = (*zi + dir * step * sign0(*gi))
                .clamp(xi - radius, xi + radius);
        }
    }
    (sign_pos(view.eval(&z)[0]) != sign_pos(f0)).then_some(z)
}

fn boundary_sample<F: Field>(
    view: &F,
    x: &[f64],
    cfg: &RobustConfig,
    proj: &ProjectionConfig,
    fp: &ProjectionConfig,
    max_step: f64,
) -> Option<ProjectionRecord> {
    let rec = project_point(view, x, &[0.0], proj, max_step);
    if rec.converged && rec.pinv.is_some() {
        return Some(rec);
    }
    let end = probe(view, x, cfg.probe_radius, cfg.probe_steps)?;
    let rec = project_false_position(view, x, &end, fp).ok()?;
    rec.pinv.is_some().then_some(rec)
}

/// Find a boundary sample of each example's class: Newton from the example,
/// else false position along a sign-gradient probe. Examples without one are
/// skipped.
pub fn prepare_robust(
    mlp: &Mlp,
    data: &LabeledBatch,
    cfg: &RobustConfig,
    proj: &ProjectionConfig,
) -> Result<PreparedRobust> {
    check_dim("input", mlp.input_dim(), data.dim())?;
    cfg.validate()?;
    proj.validate()?;
    let fp = proj.clone().with_target(&[0.0]).with_iters(FALSE_POSITION_ITERS);
    let max_step = step_limit(proj, &data.x);
    let mut items = Vec::with_capacity(data.len());
    for (i, x) in data.x.rows().enumerate() {
        let view = MarginView::new(mlp, data.labels[i])?;
        items.push(boundary_sample(&view, x, cfg, proj, &fp, max_step).map(|rec| RobustItem {
            axis: argmax_abs(&rec.jacobian).expect("nonempty jacobian"),
            handle: SampleHandle::from_record(&rec).expect("checked pinv"),
        }));
    }
    Ok(PreparedRobust { items })
}

impl PreparedRobust {
    pub fn skipped(&self) -> usize {
        self.items.iter().filter(|i| i.is_none()).count()
    }

    pub fn evaluate(&self, mlp: &Mlp, data: &LabeledBatch, cfg: &RobustConfig) -> Result<LossOutput> {
        check_dim("prepared batch", self.items.len(), data.len())?;
        if data.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = data.len() as f64;
        let mut out = LossOutput::zeros(mlp.num_params());
        out.skipped = self.skipped();
        for (i, item) in self.items.iter().enumerate() {
            let Some(item) = item else { continue };
            let x = data.x.row(i);
            let view = MarginView::new(mlp, data.labels[i])?;
            let p = item.handle.position(&view)?;
            let a = item.axis;
            let rho = (x[a] - p[a]).abs();
            let fx = view.eval(x)[0];
            let s = sign_pos(fx);
            let lam = if fx < 0.0 { cfg.lambda_incorrect } else { cfg.lambda_correct };
            let h = cfg.eps_train - s * rho;
            if h <= 0.0 {
                continue;
            }
            out.value += lam * h / n;
            let mut cot = vec![0.0; x.len()];
            cot[a] = -lam * s * sign0(p[a] - x[a]) / n;
            item.handle.grad_into(&view, &cot, &mut out.grad.0);
        }
        out.terms.push(("margin_hinge", out.value));
        Ok(out)
    }
}
