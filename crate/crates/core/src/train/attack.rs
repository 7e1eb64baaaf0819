use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledBatch;
use crate::error::{check_dim, Error, Result};
use crate::field::{margin_from_logits, MarginView};
use crate::losses::logit_cross_entropy;
use crate::mlp::Mlp;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackObjective {
    /// Ascend the cross-entropy of the true class.
    Xent,
    /// Descend the class margin `f_y - max_{i != y} f_i`.
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub eps_attack: f64,
    pub steps: usize,
    pub step_size: f64,
    pub objective: AttackObjective,
    pub random_start: bool,
    pub restarts: usize,
    /// Per-coordinate box the iterates are clipped to, e.g. `[0, 1]` for
    /// images; `None` leaves them unclipped.
    pub clip: Option<(f64, f64)>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            eps_attack: 0.3,
            steps: 40,
            step_size: 0.01,
            objective: AttackObjective::Xent,
            random_start: true,
            restarts: 1,
            clip: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !(self.eps_attack >= 0.0) {
            return Err(Error::Config("attack step size must be > 0 and eps >= 0".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("attack restarts must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo < hi) {
                return Err(Error::Config("attack clip box must have lo < hi".into()));
            }
        }
        Ok(())
    }
}

fn objective_grad(mlp: &Mlp, x: &[f64], class: usize, obj: AttackObjective) -> Vec<f64> {
    let t = mlp.trace(x);
    let cot = match obj {
        AttackObjective::Xent => logit_cross_entropy(t.output(), class).1,
        AttackObjective::Margin => {
            let view = MarginView::new(mlp, class).expect("label checked by caller");
            view.selector(t.output()).into_iter().map(|s| -s).collect()
        }
    };
    let mut g = vec![0.0; x.len()];
    mlp.backward(&t, &cot, None, Some(&mut g));
    g
}

fn margin(mlp: &Mlp, x: &[f64], class: usize) -> f64 {
    margin_from_logits(&mlp.eval(x), class)
}

/// L-infinity PGD: `steps` signed-gradient ascent steps on the objective,
/// each followed by projection onto the `eps_attack` ball around `x` and the
/// clip box. With several restarts the iterate with the smallest class
/// margin wins (first one on ties).
pub fn pgd_attack(mlp: &Mlp, x: &[f64], class: usize, cfg: &AttackConfig, seed: u64) -> Result<Vec<f64>> {
    check_dim("attack input", mlp.input_dim(), x.len())?;
    MarginView::new(mlp, class)?;
    cfg.validate()?;
    let eps = cfg.eps_attack;
    if eps == 0.0 {
        return Ok(x.to_vec());
    }
    let mut r = rng::seeded(seed);
    let project = |v: &mut [f64]| {
        for (vi, &xi) in v.iter_mut().zip(x) {
            *vi = vi.clamp(xi - eps, xi + eps);
            if let Some((lo, hi)) = cfg.clip {
                *vi = vi.clamp(lo, hi);
            }
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.restarts {
        let mut adv = x.to_vec();
        if cfg.random_start {
            for v in adv.iter_mut() {
                *v += r.gen_range(-eps..eps);
            }
            project(&mut adv);
        }
        for _ in 0..cfg.steps {
            let g = objective_grad(mlp, &adv, class, cfg.objective);
            for (v, gi) in adv.iter_mut().zip(&g) {
                if *gi != 0.0 {
                    *v += cfg.step_size * gi.signum();
                }
            }
            project(&mut adv);
        }
        let m = margin(mlp, &adv, class);
        if best.as_ref().map_or(true, |(bm, _)| m < *bm) {
            best = Some((m, adv));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Whether the class margin of `x` is strictly positive.
pub fn is_correct(mlp: &Mlp, x: &[f64], class: usize) -> bool {
    margin(mlp, x, class) > 0.0
}

pub fn accuracy(mlp: &Mlp, data: &LabeledBatch) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = (0..data.len())
        .filter(|&i| is_correct(mlp, data.x.row(i), data.labels[i]))
        .count();
    hits as f64 / data.len() as f64
}

/// Fraction of examples still classified correctly after a PGD attack. The
/// attack for example `i` is seeded with `seed + i`.
pub fn robust_accuracy(mlp: &Mlp, data: &LabeledBatch, cfg: &AttackConfig, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("attack batch"));
    }
    let mut hits = 0;
    for i in 0..data.len() {
        let adv = pgd_attack(mlp, data.x.row(i), data.labels[i], cfg, seed.wrapping_add(i as u64))?;
        if is_correct(mlp, &adv, data.labels[i]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
