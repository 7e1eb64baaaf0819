//! Reconstruction loss: level-set samples of `S_t` should sit at distance
//! `|t|` from the point cloud, and the cloud should lie on the zero set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LossOutput, Ramp};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm2, sub};
use crate::mlp::{Batch, Mlp};
use crate::projection::{
    project_point, sample_seeds, step_limit, ProjectionConfig, SeedStrategy,
};
use crate::recon::PointCloud;
use crate::rng;
use crate::sample::SampleHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Levels `T`; must contain 0. Vector-valued fields only use 0.
    pub levels: Vec<f64>,
    pub p_norm: f64,
    pub lambda: f64,
    pub lambda_schedule: Option<Ramp>,
    /// Noisy seeds projected onto the zero level per step; the same number
    /// again is spread over the nonzero levels.
    pub samples_per_level: usize,
    pub noise_sigma: f64,
    /// Extra seeds drawn uniformly from `uniform_bounds` and projected onto
    /// the zero level, to expose spurious zero-set components.
    pub uniform_seeds: usize,
    pub uniform_bounds: Vec<(f64, f64)>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            levels: vec![0.0],
            p_norm: 1.0,
            lambda: 1.0,
            lambda_schedule: Some(Ramp {
                start: 1.0,
                end: 5.0,
                epochs: 1000,
            }),
            samples_per_level: 10,
            noise_sigma: 0.1,
            uniform_seeds: 0,
            uniform_bounds: Vec::new(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.levels.contains(&0.0) {
            return Err(Error::Config("reconstruction levels must contain 0".into()));
        }
        if !(self.p_norm >= 1.0) {
            return Err(Error::Config("p_norm must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("noise sigma and lambda must be >= 0".into()));
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

/// Frozen handles grouped by target level.
#[derive(Debug, Clone)]
pub struct PreparedRecon {
    levels: Vec<(f64, Vec<SampleHandle>)>,
}

/// Project noisy copies of `batch` (and optional uniform seeds) onto the
/// configured levels. Vector-valued fields only use the zero level.
pub fn prepare_reconstruction(
    mlp: &Mlp,
    batch: &Batch,
    cfg: &ReconConfig,
    proj: &ProjectionConfig,
    seed: u64,
) -> Result<PreparedRecon> {
    cfg.validate()?;
    proj.validate()?;
    check_dim("input", mlp.input_dim(), batch.dim())?;
    let l = mlp.output_dim();
    let mut others: Vec<f64> = if l == 1 {
        cfg.levels.iter().copied().filter(|&t| t != 0.0).collect()
    } else {
        Vec::new()
    };
    others.sort_by(f64::total_cmp);
    others.dedup();
    let n_zero = cfg.samples_per_level;
    let n_other = if others.is_empty() { 0 } else { cfg.samples_per_level };
    let noisy = sample_seeds(
        SeedStrategy::GaussianPerturb {
            data: batch,
            sigma: cfg.noise_sigma,
        },
        n_zero + n_other,
        seed,
    )?;
    let mut order: Vec<usize> = (0..noisy.len()).collect();
    order.shuffle(&mut rng::seeded(seed ^ 0x5eed));
    let mut assign: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let level = if k < n_zero { 0 } else { 1 + (k - n_zero) % others.len() };
        assign.push((level, noisy.row(i).to_vec()));
    }
    if cfg.uniform_seeds > 0 {
        check_dim("uniform bounds", batch.dim(), cfg.uniform_bounds.len())?;
        let u = sample_seeds(
            SeedStrategy::Uniform(&cfg.uniform_bounds),
            cfg.uniform_seeds,
            seed ^ 0xa11,
        )?;
        assign.extend(u.rows().map(|r| (0, r.to_vec())));
    }
    let max_step = step_limit(proj, batch);
    let targets: Vec<f64> = std::iter::once(0.0).chain(others.iter().copied()).collect();
    let mut levels: Vec<(f64, Vec<SampleHandle>)> = targets.iter().map(|&t| (t, Vec::new())).collect();
    for (lvl, s) in assign {
        let target = if l == 1 { vec![targets[lvl]] } else { vec![0.0; l] };
        let rec = project_point(mlp, &s, &target, proj, max_step);
        if !rec.converged {
            continue;
        }
        if let Some(h) = SampleHandle::from_record(&rec) {
            levels[lvl].1.push(h);
        }
    }
    Ok(PreparedRecon { levels })
}

impl PreparedRecon {
    pub fn handles(&self) -> impl Iterator<Item = (f64, &[SampleHandle])> {
        self.levels.iter().map(|(t, h)| (*t, h.as_slice()))
    }

    pub fn from_handles(levels: Vec<(f64, Vec<SampleHandle>)>) -> Self {
        PreparedRecon { levels }
    }

    /// Loss at `mlp`'s parameters. `batch` holds the cloud points whose
    /// field values are penalized; distances are measured to all of `cloud`.
    pub fn evaluate(
        &self,
        mlp: &Mlp,
        cloud: &PointCloud,
        batch: &Batch,
        cfg: &ReconConfig,
        lambda: f64,
    ) -> Result<LossOutput> {
        check_dim("cloud dimension", mlp.input_dim(), cloud.dim())?;
        check_dim("batch dimension", mlp.input_dim(), batch.dim())?;
        let p = cfg.p_norm;
        let mut out = LossOutput::zeros(mlp.num_params());
        let mut level_sum = 0.0;
        for (t, handles) in &self.levels {
            if handles.is_empty() {
                log::warn!("no samples reached level {t}; term omitted");
                out.skipped += 1;
                continue;
            }
            let m = handles.len() as f64;
            let mut parts = Vec::with_capacity(handles.len());
            let mut acc = 0.0;
            for h in handles {
                let pos = h.position(mlp)?;
                let (d, j) = cloud.nearest(&pos);
                let e = d - t.abs();
                acc += e.abs().powf(p);
                parts.push((pos, j, e, d));
            }
            let mean = acc / m;
            let term = mean.powf(1.0 / p);
            level_sum += term;
            if !(mean > 0.0) {
                continue;
            }
            let outer = mean.powf(1.0 / p - 1.0) / m;
            for (h, (pos, j, e, d)) in handles.iter().zip(parts) {
                if d == 0.0 || e == 0.0 {
                    continue;
                }
                let w = outer * e.abs().powf(p - 1.0) * e.signum() / d;
                let cot: Vec<f64> = sub(&pos, cloud.row(j)).iter().map(|v| w * v).collect();
                h.grad_into(mlp, &cot, &mut out.grad.0);
            }
        }
        let n = batch.len() as f64;
        let mut fit = 0.0;
        for x in batch.rows() {
            let t = mlp.trace(x);
            let f = t.output();
            let nf = norm2(f);
            fit += nf;
            if nf > 0.0 {
                let cot: Vec<f64> = f.iter().map(|v| lambda * v / (nf * n)).collect();
                mlp.backward(&t, &cot, Some(&mut out.grad.0), None);
            }
        }
        let fit = lambda * fit / n;
        out.value = level_sum + fit;
        out.terms = vec![("level_distance", level_sum), ("data_fit", fit)];
        Ok(out)
    }
}
