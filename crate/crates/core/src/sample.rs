//! The sample network: a level-set sample whose position depends
//! differentiably on the network parameters.
//!
//! A handle freezes `p`, `D_xF(p; theta0)^+` and `c = F(p; theta0)` at
//! projection time. Its position at parameters `theta` is
//!
//! ```text
//! p(theta) = p - D_xF(p; theta0)^+ (F(p; theta) - c)
//! ```
//!
//! which equals `p` at `theta0` and keeps `F(p(theta); theta) = c` to first
//! order. Only the `F(p; theta)` term depends on `theta`, so cotangents are
//! pulled back through a single parameter VJP at `p`.

use crate::error::{check_dim, Error, Result};
use crate::field::{Field, ParamField};
use crate::linalg::Matrix;
use crate::mlp::ParamVector;
use crate::projection::ProjectionRecord;

/// Largest parameter count for which the dense velocity matrix is built.
pub const MAX_VELOCITY_PARAMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleHandle {
    p: Vec<f64>,
    /// `d x l`
    pinv: Matrix,
    c: Vec<f64>,
}

impl SampleHandle {
    pub fn new(p: Vec<f64>, pinv: Matrix, c: Vec<f64>) -> Result<Self> {
        check_dim("handle pinv rows", p.len(), pinv.rows())?;
        check_dim("handle level", pinv.cols(), c.len())?;
        Ok(SampleHandle { p, pinv, c })
    }

    /// Handle for a projected point; `None` if the jacobian at the point was
    /// rank deficient.
    pub fn from_record(rec: &ProjectionRecord) -> Option<Self> {
        rec.pinv.as_ref().map(|pinv| SampleHandle {
            p: rec.p.clone(),
            pinv: pinv.clone(),
            c: rec.level.clone(),
        })
    }

    pub fn point(&self) -> &[f64] {
        &self.p
    }

    pub fn pinv(&self) -> &Matrix {
        &self.pinv
    }

    pub fn level(&self) -> &[f64] {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    fn check<F: Field + ?Sized>(&self, field: &F) -> Result<()> {
        check_dim("handle input dimension", field.input_dim(), self.p.len())?;
        check_dim("handle output dimension", field.output_dim(), self.c.len())
    }

    /// Position of the sample under the field's current parameters.
    pub fn position<F: Field + ?Sized>(&self, field: &F) -> Result<Vec<f64>> {
        self.check(field)?;
        let f = field.eval(&self.p);
        let diff: Vec<f64> = f.iter().zip(&self.c).map(|(a, b)| a - b).collect();
        let shift = self.pinv.matvec(&diff);
        Ok(self.p.iter().zip(&shift).map(|(p, s)| p - s).collect())
    }

    /// Adds `cotangent^T D_theta p(theta0)` into `out`.
    pub fn grad_into<F: ParamField + ?Sized>(&self, field: &F, cotangent: &[f64], out: &mut [f64]) {
        assert_eq!(cotangent.len(), self.p.len(), "cotangent length");
        let l = self.c.len();
        let pulled: Vec<f64> = (0..l)
            .map(|k| {
                -(0..self.p.len())
                    .map(|i| self.pinv.get(i, k) * cotangent[i])
                    .sum::<f64>()
            })
            .collect();
        field.vjp_params_into(&self.p, &pulled, out);
    }
}

pub fn sample_position<F: Field + ?Sized>(field: &F, h: &SampleHandle) -> Result<Vec<f64>> {
    h.position(field)
}

/// `cotangent^T D_theta p(theta0)`, i.e. `-(pinv^T cotangent)` pulled back
/// through the parameter VJP at `p`.
pub fn sample_grad<F: ParamField + ?Sized>(
    field: &F,
    h: &SampleHandle,
    cotangent: &[f64],
) -> Result<ParamVector> {
    h.check(field)?;
    check_dim("sample cotangent", h.dim(), cotangent.len())?;
    let mut g = ParamVector::zeros(field.num_params());
    h.grad_into(field, cotangent, &mut g.0);
    Ok(g)
}

/// Dense `d x m` velocity matrix `D_theta p(theta0)`, assembled row by row
/// from unit cotangents. Meant for tests on small networks.
pub fn sample_velocity_matrix<F: ParamField + ?Sized>(field: &F, h: &SampleHandle) -> Result<Matrix> {
    let m = field.num_params();
    if m > MAX_VELOCITY_PARAMS {
        return Err(Error::Budget(format!(
            "velocity matrix with {m} parameters exceeds {MAX_VELOCITY_PARAMS}"
        )));
    }
    let d = h.dim();
    let mut out = Matrix::zeros(d, m);
    let mut e = vec![0.0; d];
    for i in 0..d {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[i] = 1.0;
        let g = sample_grad(field, h, &e)?;
        out.row_mut(i).copy_from_slice(&g.0);
    }
    Ok(out)
}

pub fn sample_positions<F: Field + ?Sized>(field: &F, handles: &[SampleHandle]) -> Result<Vec<Vec<f64>>> {
    handles.iter().map(|h| h.position(field)).collect()
}
