//! Training losses over sample handles and labeled batches.
//!
//! Losses that depend on level-set samples are split in two phases: a
//! `prepare` step projects points at the current parameters and freezes
//! sample handles, then `evaluate` computes the value and parameter gradient
//! at any parameters through those frozen handles. Training calls both once
//! per optimizer step; gradient checks perturb parameters between them.

mod baseline;
mod recon;
mod robust;
mod svm;

pub use baseline::{cross_entropy, logit_cross_entropy, margin_logit, output_hinge, soft_svm_affine, MarginLogit};
pub use recon::{prepare_reconstruction, PreparedRecon, ReconConfig};
pub use robust::{axis_distance, prepare_robust, PreparedRobust, RobustConfig};
pub use svm::{prepare_svm, PreparedSvm, SvmConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::ParamVector;

/// Value and parameter gradient of a loss, with bookkeeping on examples that
/// could not use the level-set term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: ParamVector,
    /// Examples that used the cross-entropy fallback.
    pub fallbacks: usize,
    /// Examples or levels dropped entirely.
    pub skipped: usize,
    /// Named components of `value`, for logging.
    pub terms: Vec<(&'static str, f64)>,
}

impl LossOutput {
    pub(crate) fn zeros(m: usize) -> Self {
        LossOutput {
            value: 0.0,
            grad: ParamVector::zeros(m),
            fallbacks: 0,
            skipped: 0,
            terms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistNorm {
    L2,
    #[default]
    Linf,
}

impl DistNorm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            DistNorm::L2 => crate::linalg::norm2(v),
            DistNorm::Linf => crate::linalg::norm_inf(v),
        }
    }

    /// A (sub)gradient of the norm at `v`; zero at the origin. For `Linf`
    /// the active coordinate is the lowest index attaining the max.
    pub fn grad(self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        match self {
            DistNorm::L2 => {
                let n = crate::linalg::norm2(v);
                if n > 0.0 {
                    g.iter_mut().zip(v).for_each(|(gi, vi)| *gi = vi / n);
                }
            }
            DistNorm::Linf => {
                if let Some(i) = argmax_abs(v) {
                    if v[i] != 0.0 {
                        g[i] = v[i].signum();
                    }
                }
            }
        }
        g
    }
}

/// Index of the largest `|v_i|`, lowest index on ties.
pub fn argmax_abs(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if best.map_or(true, |b| x.abs() > v[b].abs()) {
            best = Some(i);
        }
    }
    best
}

/// `sign` with `sign(0) = +1`.
pub fn sign_pos(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `sign` with `sign(0) = 0`.
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Linear ramp from `start` to `end` over `epochs`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub epochs: usize,
}

impl Ramp {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("ramp epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let t = (epoch as f64 / self.epochs as f64).min(1.0);
        self.start + (self.end - self.start) * t
    }
}
