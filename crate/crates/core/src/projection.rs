//! Moving seed points onto a level set `{x | F(x) = t}`.
//!
//! The main route is the generalized Newton iteration
//! `p <- p - D_xF(p)^+ (F(p) - t)`; for affine `F` one step is the orthogonal
//! projection onto the level set. For scalar fields a bracketing
//! false-position search is available as a fallback.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::Field;
use crate::linalg::{norm2, Matrix};
use crate::mlp::Batch;
use crate::rng;

pub use crate::linalg::pinv_small;

/// Newton budget used when none is configured.
pub const DEFAULT_NEWTON_ITERS: usize = 20;
/// False-position budget used by the robust trainer.
pub const FALSE_POSITION_ITERS: usize = 40;
/// A Newton step longer than this multiple of the seed-domain diagonal is
/// rejected.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    #[default]
    Newton,
    FalsePosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub max_iters: usize,
    /// Success threshold on `||F(p) - target||`.
    pub residual_tol: f64,
    /// Added to the diagonal of `A A^T` before inverting.
    pub pinv_reg: f64,
    /// Empty means the zero vector of the field's output dimension.
    pub target_level: Vec<f64>,
    pub method: ProjectionMethod,
    /// Diagonal of the seed domain for the divergence guard; `None` uses
    /// the bounding box of the seeds being projected.
    pub domain_diagonal: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            max_iters: DEFAULT_NEWTON_ITERS,
            residual_tol: 1e-6,
            pinv_reg: 1e-12,
            target_level: Vec::new(),
            method: ProjectionMethod::Newton,
            domain_diagonal: None,
        }
    }
}

impl ProjectionConfig {
    pub fn with_target(mut self, target: &[f64]) -> Self {
        self.target_level = target.to_vec();
        self
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("projection max_iters must be >= 1".into()));
        }
        if !(self.residual_tol > 0.0) || self.pinv_reg < 0.0 {
            return Err(Error::Config(
                "projection tolerance must be > 0 and regularization >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn target_for(&self, l: usize) -> Result<Vec<f64>> {
        if self.target_level.is_empty() {
            return Ok(vec![0.0; l]);
        }
        check_dim("target level", l, self.target_level.len())?;
        Ok(self.target_level.clone())
    }
}

/// Outcome of projecting one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRecord {
    /// Final point.
    pub p: Vec<f64>,
    /// `F(p; theta0)`, the level the point actually sits on.
    pub level: Vec<f64>,
    pub target: Vec<f64>,
    /// `D_xF(p; theta0)^+` as a `d x l` matrix; `None` when the jacobian at
    /// the final point is rank deficient.
    pub pinv: Option<Matrix>,
    /// Input jacobian at the final point, `l x d` row-major.
    pub jacobian: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
}

impl ProjectionRecord {
    /// `F(p) - target`.
    pub fn residual(&self) -> Vec<f64> {
        self.level.iter().zip(&self.target).map(|(a, b)| a - b).collect()
    }

    fn at<F: Field + ?Sized>(
        field: &F,
        p: Vec<f64>,
        target: &[f64],
        reg: f64,
        tol: f64,
        iters: usize,
    ) -> Self {
        let (level, jac) = field.eval_jacobian(&p);
        let pinv = Matrix::from_vec(field.output_dim(), field.input_dim(), jac.clone())
            .ok()
            .and_then(|a| pinv_small(&a, reg).ok());
        let res: Vec<f64> = level.iter().zip(target).map(|(a, b)| a - b).collect();
        ProjectionRecord {
            converged: norm2(&res) <= tol,
            p,
            level,
            target: target.to_vec(),
            pinv,
            jacobian: jac,
            iters,
        }
    }
}

/// One generalized Newton step towards the `target` level set.
pub fn newton_step<F: Field + ?Sized>(field: &F, p: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_dim("point", field.input_dim(), p.len())?;
    check_dim("target", field.output_dim(), target.len())?;
    let (val, jac) = field.eval_jacobian(p);
    let a = Matrix::from_vec(field.output_dim(), field.input_dim(), jac)?;
    let pinv = pinv_small(&a, 0.0)?;
    let r: Vec<f64> = val.iter().zip(target).map(|(v, t)| v - t).collect();
    let step = pinv.matvec(&r);
    Ok(p.iter().zip(&step).map(|(a, b)| a - b).collect())
}

fn bbox_diagonal(seeds: &Batch) -> f64 {
    if seeds.is_empty() {
        return 0.0;
    }
    seeds
        .bounds()
        .iter()
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt()
}

/// Longest Newton step the divergence guard accepts for these seeds.
pub fn step_limit(cfg: &ProjectionConfig, seeds: &Batch) -> f64 {
    let diag = cfg.domain_diagonal.unwrap_or_else(|| bbox_diagonal(seeds));
    if diag > 0.0 {
        DIVERGENCE_FACTOR * diag
    } else {
        f64::INFINITY
    }
}

/// Newton iterations from a single seed.
pub fn project_point<F: Field + ?Sized>(
    field: &F,
    seed: &[f64],
    target: &[f64],
    cfg: &ProjectionConfig,
    max_step: f64,
) -> ProjectionRecord {
    let (l, d) = (field.output_dim(), field.input_dim());
    let mut p = seed.to_vec();
    let mut iters = 0;
    loop {
        let (val, jac) = field.eval_jacobian(&p);
        let r: Vec<f64> = val.iter().zip(target).map(|(v, t)| v - t).collect();
        let a = Matrix::from_vec(l, d, jac.clone()).expect("jacobian shape");
        let pinv = pinv_small(&a, cfg.pinv_reg).ok();
        let res = norm2(&r);
        let done = res <= cfg.residual_tol || !res.is_finite();
        if done || iters >= cfg.max_iters || pinv.is_none() {
            return ProjectionRecord {
                p,
                level: val,
                target: target.to_vec(),
                pinv,
                jacobian: jac,
                converged: res <= cfg.residual_tol,
                iters,
            };
        }
        let step = pinv.as_ref().unwrap().matvec(&r);
        let len = norm2(&step);
        if !(len <= max_step) {
            // Divergence guard: keep the pre-step point, report failure.
            return ProjectionRecord {
                p,
                level: val,
                target: target.to_vec(),
                pinv,
                jacobian: jac,
                converged: false,
                iters,
            };
        }
        for (pi, s) in p.iter_mut().zip(&step) {
            *pi -= s;
        }
        iters += 1;
    }
}

/// Project every seed; one record per seed, in seed order.
pub fn project<F: Field + ?Sized>(
    field: &F,
    seeds: &Batch,
    cfg: &ProjectionConfig,
) -> Result<Vec<ProjectionRecord>> {
    cfg.validate()?;
    check_dim("seed dimension", field.input_dim(), seeds.dim())?;
    let target = cfg.target_for(field.output_dim())?;
    let max_step = step_limit(cfg, seeds);
    match cfg.method {
        ProjectionMethod::Newton => Ok(seeds
            .rows()
            .map(|s| project_point(field, s, &target, cfg, max_step))
            .collect()),
        ProjectionMethod::FalsePosition => {
            if field.output_dim() != 1 {
                return Err(Error::Config(
                    "false-position projection needs a scalar field".into(),
                ));
            }
            Ok(seeds
                .rows()
                .map(|s| ray_false_position(field, s, target[0], cfg, max_step))
                .collect())
        }
    }
}

/// Bracket a root along the steepest-descent ray of `|F - t|` by doubling the
/// step, then run false position on the bracket.
fn ray_false_position<F: Field + ?Sized>(
    field: &F,
    seed: &[f64],
    target: f64,
    cfg: &ProjectionConfig,
    max_step: f64,
) -> ProjectionRecord {
    let (val, jac) = field.eval_jacobian(seed);
    let r0 = val[0] - target;
    let gn = norm2(&jac);
    if r0.abs() <= cfg.residual_tol || gn < crate::linalg::RANK_TOL {
        return ProjectionRecord::at(field, seed.to_vec(), &[target], cfg.pinv_reg, cfg.residual_tol, 0);
    }
    let dir: Vec<f64> = jac.iter().map(|g| -r0.signum() * g / gn).collect();
    let limit = if max_step.is_finite() { max_step } else { 1e6 };
    let mut len = (r0.abs() / gn).max(1e-12);
    while len <= limit {
        let end: Vec<f64> = seed.iter().zip(&dir).map(|(s, d)| s + len * d).collect();
        let re = field.eval(&end)[0] - target;
        if re.signum() != r0.signum() || re == 0.0 {
            if let Ok(rec) = false_position_segment(field, seed, &end, target, cfg) {
                return rec;
            }
            break;
        }
        len *= 2.0;
    }
    ProjectionRecord::at(field, seed.to_vec(), &[target], cfg.pinv_reg, cfg.residual_tol, 0)
}

/// Regula falsi (Illinois variant) for a scalar field on the segment
/// `[x, x_adv]`, whose endpoints must straddle the zero level set. Uses
/// `cfg.max_iters` and `cfg.residual_tol`.
pub fn project_false_position<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    x_adv: &[f64],
    cfg: &ProjectionConfig,
) -> Result<ProjectionRecord> {
    cfg.validate()?;
    check_dim("field output (scalar)", 1, field.output_dim())?;
    check_dim("segment start", field.input_dim(), x.len())?;
    check_dim("segment end", field.input_dim(), x_adv.len())?;
    let target = cfg.target_for(1)?[0];
    false_position_segment(field, x, x_adv, target, cfg)
}

fn false_position_segment<F: Field + ?Sized>(
    field: &F,
    x: &[f64],
    x_adv: &[f64],
    target: f64,
    cfg: &ProjectionConfig,
) -> Result<ProjectionRecord> {
    let point = |s: f64| -> Vec<f64> { x.iter().zip(x_adv).map(|(a, b)| a + s * (b - a)).collect() };
    let g = |s: f64| field.eval(&point(s))[0] - target;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut ga, mut gb) = (g(a), g(b));
    let tol = cfg.residual_tol;
    let finish = |s: f64, iters: usize| {
        ProjectionRecord::at(field, point(s), &[target], cfg.pinv_reg, tol, iters)
    };
    if ga.abs() <= tol {
        return Ok(finish(a, 0));
    }
    if gb.abs() <= tol {
        return Ok(finish(b, 0));
    }
    if ga.signum() == gb.signum() {
        return Err(Error::NoBracket { fa: ga, fb: gb });
    }
    let (mut best, mut best_g) = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
    let mut side = 0i8;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        let c = ((a * gb - b * ga) / (gb - ga)).clamp(a, b);
        let gc = g(c);
        if gc.abs() < best_g.abs() {
            best = c;
            best_g = gc;
        }
        if gc.abs() <= tol {
            break;
        }
        if gc.signum() == gb.signum() {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(finish(best, iters))
}

/// How seeds for projection are drawn.
#[derive(Debug, Clone, Copy)]
pub enum SeedStrategy<'a> {
    /// i.i.d. uniform in a per-axis box.
    Uniform(&'a [(f64, f64)]),
    /// Rows drawn with replacement from `data`, plus `N(0, sigma^2 I)` noise.
    GaussianPerturb { data: &'a Batch, sigma: f64 },
}

pub fn sample_seeds(strategy: SeedStrategy<'_>, n: usize, rng_seed: u64) -> Result<Batch> {
    if n == 0 {
        return Err(Error::Config("seed count must be >= 1".into()));
    }
    let mut rng = rng::seeded(rng_seed);
    match strategy {
        SeedStrategy::Uniform(bounds) => {
            if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::Config("invalid uniform seed bounds".into()));
            }
            let mut data = Vec::with_capacity(n * bounds.len());
            for _ in 0..n {
                for &(lo, hi) in bounds {
                    data.push(if lo == hi { lo } else { rng.gen_range(lo..hi) });
                }
            }
            Batch::new(bounds.len(), data)
        }
        SeedStrategy::GaussianPerturb { data, sigma } => {
            if data.is_empty() {
                return Err(Error::Empty("gaussian_perturb needs a non-empty data batch"));
            }
            if !(sigma >= 0.0) {
                return Err(Error::Config("sigma must be >= 0".into()));
            }
            let normal = Normal::new(0.0, 1.0).unwrap();
            let d = data.dim();
            let mut out = Vec::with_capacity(n * d);
            for _ in 0..n {
                let row = data.row(rng.gen_range(0..data.len()));
                for &v in row {
                    let z: f64 = normal.sample(&mut rng);
                    out.push(v + sigma * z);
                }
            }
            Batch::new(d, out)
        }
    }
}

/// Per-axis bounds of `batch` grown by `frac` of each side length.
pub fn inflated_bounds(batch: &Batch, frac: f64) -> Vec<(f64, f64)> {
    batch
        .bounds()
        .into_iter()
        .map(|(lo, hi)| {
            let pad = frac * (hi - lo);
            (lo - pad, hi + pad)
        })
        .collect()
}

/// CSV audit of projection records: seed index, point coordinates,
/// residual `F(p) - target`, convergence flag and iteration count.
pub fn write_records_csv<W: Write>(records: &[ProjectionRecord], mut w: W) -> std::io::Result<()> {
    let d = records.first().map_or(0, |r| r.p.len());
    let l = records.first().map_or(0, |r| r.level.len());
    let mut header = vec!["seed".to_string()];
    header.extend((0..d).map(|i| format!("p{i}")));
    header.extend((0..l).map(|i| format!("c{i}")));
    header.push("converged".into());
    header.push("iters".into());
    writeln!(w, "{}", header.join(","))?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(r.p.iter().map(|v| format!("{v:e}")));
        row.extend(r.residual().iter().map(|v| format!("{v:e}")));
        row.push((r.converged as u8).to_string());
        row.push(r.iters.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
