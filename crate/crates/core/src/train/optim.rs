use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mlp::{Mlp, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimMethod {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub method: OptimMethod,
    pub lr: f64,
    pub momentum: f64,
    /// Nesterov look-ahead for `sgd_momentum`.
    pub nesterov: bool,
    pub weight_decay: f64,
    /// `(epoch, multiplier)` pairs; from each listed epoch on, the learning
    /// rate is multiplied by the product of all multipliers reached so far.
    pub lr_schedule: Vec<(usize, f64)>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            method: OptimMethod::Adam,
            lr: 0.001,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 0.0,
            lr_schedule: Vec::new(),
            epochs: 100,
            batch_size: 32,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("momentum must be in [0, 1) and weight decay >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if self.lr_schedule.iter().any(|&(_, m)| !(m > 0.0)) {
            return Err(Error::Config("learning rate multipliers must be > 0".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .filter(|&&(e, _)| epoch >= e)
            .fold(self.lr, |lr, &(_, m)| lr * m)
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
    pub skipped: u64,
}

impl OptimState {
    pub fn new(m: usize) -> Self {
        OptimState {
            first: vec![0.0; m],
            second: vec![0.0; m],
            steps: 0,
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One in-place update. A non-finite gradient leaves the parameters alone and
/// returns `false`.
pub fn optimize_step(
    mlp: &mut Mlp,
    grad: &ParamVector,
    state: &mut OptimState,
    cfg: &OptimConfig,
    epoch: usize,
) -> Result<bool> {
    check_dim("gradient", mlp.num_params(), grad.len())?;
    check_dim("optimizer state", mlp.num_params(), state.first.len())?;
    if !grad.is_finite() {
        state.skipped += 1;
        log::warn!("non-finite gradient at step {}; update skipped", state.steps);
        return Ok(false);
    }
    let lr = cfg.lr_at(epoch);
    state.steps += 1;
    let g = &grad.0;
    match cfg.method {
        OptimMethod::SgdMomentum => {
            let (mu, wd, nesterov) = (cfg.momentum, cfg.weight_decay, cfg.nesterov);
            let buf = &mut state.first;
            mlp.update_params(|i, w| {
                let gi = g[i] + wd * *w;
                buf[i] = mu * buf[i] + gi;
                let step = if nesterov { gi + mu * buf[i] } else { buf[i] };
                *w -= lr * step;
            });
        }
        OptimMethod::Adam => {
            let t = state.steps as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let wd = cfg.weight_decay;
            let (m1, m2) = (&mut state.first, &mut state.second);
            mlp.update_params(|i, w| {
                let gi = g[i] + wd * *w;
                m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * gi;
                m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let mh = m1[i] / c1;
                let vh = m2[i] / c2;
                *w -= lr * mh / (vh.sqrt() + ADAM_EPS);
            });
        }
    }
    Ok(true)
}
