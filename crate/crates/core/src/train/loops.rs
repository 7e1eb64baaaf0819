use rand::seq::SliceRandom;
use rand::Rng;

use super::attack::{accuracy, robust_accuracy, AttackObjective};
use super::config::{
    ClassifierConfig, ClassifierLoss, OutputConfig, ReconTrainConfig, RobustLoss, RobustTrainConfig,
    RunConfig,
};
use super::optim::{optimize_step, OptimConfig, OptimState};
use super::plot::{curves_svg, ContourPlot};
use super::run::{MetricsTable, RunDirectory};
use crate::data::LabeledBatch;
use crate::error::{check_dim, Error, Result};
use crate::field::{num_classes, MarginView};
use crate::losses::{cross_entropy, output_hinge, prepare_reconstruction, prepare_robust, prepare_svm, LossOutput};
use crate::mlp::{Batch, Mlp};
use crate::projection::inflated_bounds;
use crate::recon::{
    chamfer, extract_curve, extract_isosurface, hausdorff, sample_mesh_surface, save_mesh, save_points, IsoMesh,
    Metric, PointCloud,
};
use crate::rng::{self, Rng64};

/// Seed offsets keep the streams used for initialization, shuffling,
/// projection seeds and attacks independent of each other.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const ATTACK_STREAM: u64 = 0x4154_4b00;
const METRIC_STREAM: u64 = 0x4d45_5452;

/// Final values of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: MetricsTable,
    pub model: Mlp,
}

impl RunSummary {
    pub fn last(&self, name: &str) -> Option<f64> {
        self.metrics.last(name)
    }
}

/// Dispatches on the config kind and runs to completion.
pub fn train(cfg: &RunConfig, run: &RunDirectory) -> Result<RunSummary> {
    cfg.validate()?;
    let out = match cfg {
        RunConfig::Classifier(c) => train_classifier(c, run),
        RunConfig::Robust(c) => train_robust(c, run),
        RunConfig::Recon(c) => train_reconstruction(c, run),
    }?;
    emit_plots(run)?;
    Ok(out)
}

fn minibatches(n: usize, batch: usize, rng: &mut Rng64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn opt(v: f64) -> Option<f64> {
    Some(v)
}

struct Stepper<'a> {
    cfg: &'a OptimConfig,
    state: OptimState,
    skipped_steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a OptimConfig, mlp: &Mlp) -> Self {
        Stepper {
            cfg,
            state: OptimState::new(mlp.num_params()),
            skipped_steps: 0,
        }
    }

    fn step(&mut self, mlp: &mut Mlp, loss: &LossOutput, epoch: usize) -> Result<()> {
        if !optimize_step(mlp, &loss.grad, &mut self.state, self.cfg, epoch)? {
            self.skipped_steps += 1;
        }
        Ok(())
    }
}

fn checkpoint(run: &RunDirectory, out: &OutputConfig, mlp: &Mlp, epoch: usize, epochs: usize) -> Result<()> {
    if out.checkpoint_every > 0 && (epoch + 1) % out.checkpoint_every == 0 {
        run.save_epoch(mlp, epoch + 1)?;
    }
    if epoch + 1 == epochs {
        run.save_final(mlp)?;
    }
    Ok(())
}

fn check_model(mlp: &Mlp, data: &LabeledBatch) -> Result<()> {
    check_dim("model input vs data", data.dim(), mlp.input_dim())?;
    if data.num_classes() > num_classes(mlp) {
        return Err(Error::Config(format!(
            "data has {} classes, model outputs {}",
            data.num_classes(),
            num_classes(mlp)
        )));
    }
    Ok(())
}

/// Standard or geometric-SVM training of a classifier. Metrics per epoch:
/// mean batch loss, train/test accuracy, and the number of examples that
/// used the cross-entropy fallback.
pub fn train_classifier(cfg: &ClassifierConfig, run: &RunDirectory) -> Result<RunSummary> {
    let data = cfg.data.load()?;
    let test = cfg.test.as_ref().map(|t| t.load()).transpose()?;
    let mut mlp = cfg.model.init(&mut rng::seeded(cfg.seed))?;
    check_model(&mlp, &data)?;
    let mut shuffle = rng::seeded(cfg.seed ^ SHUFFLE_STREAM);
    let mut stepper = Stepper::new(&cfg.optim, &mlp);
    let mut table = MetricsTable::new(&[
        "epoch", "lr", "loss", "train_acc", "test_acc", "fallbacks", "skipped_steps",
    ]);
    let epochs = cfg.optim.epochs;
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut fallbacks = 0;
        let batches = minibatches(data.len(), cfg.optim.batch_size, &mut shuffle);
        for idx in &batches {
            let b = data.subset(idx);
            let loss = match cfg.loss {
                ClassifierLoss::Xent => cross_entropy(&mlp, &b)?,
                ClassifierLoss::Hinge => output_hinge(&mlp, &b)?,
                ClassifierLoss::Svm => {
                    prepare_svm(&mlp, &b, &cfg.projection)?.evaluate(&mlp, &b, &cfg.svm, cfg.svm.lambda_at(epoch))?
                }
            };
            loss_sum += loss.value;
            fallbacks += loss.fallbacks;
            stepper.step(&mut mlp, &loss, epoch)?;
        }
        table.push(vec![
            opt(epoch as f64),
            opt(cfg.optim.lr_at(epoch)),
            opt(loss_sum / batches.len() as f64),
            opt(accuracy(&mlp, &data)),
            test.as_ref().map(|t| accuracy(&mlp, t)),
            opt(fallbacks as f64),
            opt(stepper.skipped_steps as f64),
        ]);
        checkpoint(run, &cfg.output, &mlp, epoch, epochs)?;
    }
    run.write_metrics(&table)?;
    Ok(RunSummary { metrics: table, model: mlp })
}

/// Adversarial margin training (or a cross-entropy baseline) with PGD
/// evaluation under both attack objectives on the evaluation epochs.
pub fn train_robust(cfg: &RobustTrainConfig, run: &RunDirectory) -> Result<RunSummary> {
    let data = cfg.data.load()?;
    let test = cfg.test.as_ref().map(|t| t.load()).transpose()?;
    let eval = test.as_ref().unwrap_or(&data);
    let mut mlp = cfg.model.init(&mut rng::seeded(cfg.seed))?;
    check_model(&mlp, &data)?;
    let mut shuffle = rng::seeded(cfg.seed ^ SHUFFLE_STREAM);
    let mut stepper = Stepper::new(&cfg.optim, &mlp);
    let mut table = MetricsTable::new(&[
        "epoch",
        "lr",
        "loss",
        "train_acc",
        "test_acc",
        "no_boundary_sample",
        "skipped_steps",
        "robust_acc_xent",
        "robust_acc_margin",
    ]);
    let epochs = cfg.optim.epochs;
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut missing = 0;
        let batches = minibatches(data.len(), cfg.optim.batch_size, &mut shuffle);
        for idx in &batches {
            let b = data.subset(idx);
            let loss = match cfg.loss {
                _ if epoch < cfg.warmup_epochs => cross_entropy(&mlp, &b)?,
                RobustLoss::Xent => cross_entropy(&mlp, &b)?,
                RobustLoss::Margin => {
                    let prep = prepare_robust(&mlp, &b, &cfg.robust, &cfg.projection)?;
                    missing += prep.skipped();
                    prep.evaluate(&mlp, &b, &cfg.robust)?
                }
            };
            loss_sum += loss.value;
            stepper.step(&mut mlp, &loss, epoch)?;
        }
        let (rx, rm) = if OutputConfig::due(cfg.output.eval_every, epoch, epochs) {
            let seed = cfg.seed ^ ATTACK_STREAM;
            let mut a = cfg.attack.clone();
            a.objective = AttackObjective::Xent;
            let rx = robust_accuracy(&mlp, eval, &a, seed)?;
            a.objective = AttackObjective::Margin;
            (Some(rx), Some(robust_accuracy(&mlp, eval, &a, seed)?))
        } else {
            (None, None)
        };
        table.push(vec![
            opt(epoch as f64),
            opt(cfg.optim.lr_at(epoch)),
            opt(loss_sum / batches.len() as f64),
            opt(accuracy(&mlp, &data)),
            test.as_ref().map(|t| accuracy(&mlp, t)),
            opt(missing as f64),
            opt(stepper.skipped_steps as f64),
            rx,
            rm,
        ]);
        checkpoint(run, &cfg.output, &mlp, epoch, epochs)?;
    }
    run.write_metrics(&table)?;
    Ok(RunSummary { metrics: table, model: mlp })
}

/// Zero set of a reconstruction network: iso-contours or iso-surfaces for
/// scalar fields, projected-seed polylines for `R^3 -> R^2` fields.
pub fn extract_zero_set(mlp: &Mlp, bounds: &[(f64, f64)], res: usize) -> Result<IsoMesh> {
    match (mlp.input_dim(), mlp.output_dim()) {
        (2 | 3, 1) => extract_isosurface(mlp, bounds, res, 0.0),
        (3, 2) => extract_curve(mlp, bounds, res),
        (d, l) => Err(Error::Config(format!(
            "zero-set extraction supports R^2 -> R, R^3 -> R and R^3 -> R^2 fields, got R^{d} -> R^{l}"
        ))),
    }
}

/// Chamfer (raw and divided by the reference bounding-box diagonal) and
/// Hausdorff distance between `n` points sampled from `mesh` and the
/// reference. Empty zero sets give `NaN`.
pub fn zero_set_metrics(mesh: &IsoMesh, reference: &Batch, n: usize, seed: u64) -> Result<[f64; 3]> {
    if mesh.is_empty() {
        log::warn!("extracted zero set is empty");
        return Ok([f64::NAN; 3]);
    }
    let a = PointCloud::new(sample_mesh_surface(mesh, n, seed)?)?;
    let b = PointCloud::new(reference.clone())?;
    let diag = reference
        .bounds()
        .iter()
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    let c = chamfer(&a, &b, Metric::L2)?;
    Ok([c, c / diag, hausdorff(&a, &b)?])
}

/// Reconstruction from a point cloud. Metrics per epoch: mean loss, the
/// loss weight, level-set samples used; on evaluation epochs the zero set is
/// extracted and compared with the reference geometry.
pub fn train_reconstruction(cfg: &ReconTrainConfig, run: &RunDirectory) -> Result<RunSummary> {
    let (points, reference) = cfg.cloud.load()?;
    let cloud = PointCloud::new(points.clone())?;
    let mut mlp = cfg.model.init(&mut rng::seeded(cfg.seed))?;
    check_dim("model input vs cloud", cloud.dim(), mlp.input_dim())?;
    let bounds = inflated_bounds(&reference, cfg.output.margin);
    let mut shuffle = rng::seeded(cfg.seed ^ SHUFFLE_STREAM);
    let mut stepper = Stepper::new(&cfg.optim, &mlp);
    let mut table = MetricsTable::new(&[
        "epoch",
        "lr",
        "lambda",
        "loss",
        "samples",
        "skipped_levels",
        "skipped_steps",
        "chamfer",
        "chamfer_normalized",
        "hausdorff",
    ]);
    let epochs = cfg.optim.epochs;
    let mut last_mesh = None;
    for epoch in 0..epochs {
        let lambda = cfg.recon.lambda_at(epoch);
        let mut loss_sum = 0.0;
        let mut samples = 0;
        let mut skipped = 0;
        let batches = minibatches(cloud.len(), cfg.optim.batch_size, &mut shuffle);
        for idx in &batches {
            let mut rows = Vec::with_capacity(idx.len() * cloud.dim());
            for &i in idx {
                rows.extend_from_slice(cloud.row(i));
            }
            let b = Batch::new(cloud.dim(), rows)?;
            let prep = prepare_reconstruction(&mlp, &b, &cfg.recon, &cfg.projection, shuffle.gen())?;
            samples += prep.handles().map(|(_, h)| h.len()).sum::<usize>();
            let loss = prep.evaluate(&mlp, &cloud, &b, &cfg.recon, lambda)?;
            skipped += loss.skipped;
            loss_sum += loss.value;
            stepper.step(&mut mlp, &loss, epoch)?;
        }
        let metrics = if OutputConfig::due(cfg.output.eval_every, epoch, epochs) {
            let mesh = extract_zero_set(&mlp, &bounds, cfg.extract.res)?;
            let m = zero_set_metrics(&mesh, &reference, cfg.extract.metric_points, cfg.seed ^ METRIC_STREAM)?;
            last_mesh = Some(mesh);
            m.map(Some)
        } else {
            [None; 3]
        };
        let mut row = vec![
            opt(epoch as f64),
            opt(cfg.optim.lr_at(epoch)),
            opt(lambda),
            opt(loss_sum / batches.len() as f64),
            opt(samples as f64),
            opt(skipped as f64),
            opt(stepper.skipped_steps as f64),
        ];
        row.extend(metrics);
        table.push(row);
        checkpoint(run, &cfg.output, &mlp, epoch, epochs)?;
    }
    run.write_metrics(&table)?;
    save_points(&points, run.file("cloud.xyz"))?;
    if let Some(mesh) = last_mesh.filter(|m| !m.is_empty()) {
        save_mesh(&mesh, run.file("zero_set.obj"))?;
        save_points(
            &sample_mesh_surface(&mesh, cfg.extract.metric_points, cfg.seed ^ METRIC_STREAM)?,
            run.file("zero_set.xyz"),
        )?;
    }
    Ok(RunSummary { metrics: table, model: mlp })
}

fn loss_plot(table: &MetricsTable) -> String {
    let mut series = Vec::new();
    for name in ["loss", "train_acc", "test_acc", "robust_acc_xent", "robust_acc_margin", "chamfer"] {
        let s = table.series("epoch", name);
        if !s.is_empty() {
            series.push((name.to_string(), s));
        }
    }
    curves_svg("training metrics", "epoch", "value", &series)
}

/// Contours at `{-1, 0, 1}` of the class-1 margin for 2D binary classifiers.
pub fn classifier_contours(mlp: &Mlp, bounds: &[(f64, f64)], res: usize) -> Result<Vec<IsoMesh>> {
    let view = MarginView::new(mlp, 1)?;
    [-1.0, 0.0, 1.0]
        .into_iter()
        .map(|t| extract_isosurface(&view, bounds, res, t))
        .collect()
}

/// Writes `plots/metrics.svg` for every run, and `plots/contours.svg` for
/// runs whose final model maps the plane to a binary margin or a scalar.
pub fn emit_plots(run: &RunDirectory) -> Result<Vec<std::path::PathBuf>> {
    let table = run.metrics()?;
    let mut written = Vec::new();
    let p = run.plots_dir().join("metrics.svg");
    std::fs::write(&p, loss_plot(&table)).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    let cfg = run.config()?;
    let final_ckpt = run.checkpoint_dir().join(super::run::FINAL_CHECKPOINT);
    if !final_ckpt.exists() {
        return Ok(written);
    }
    let mlp = run.load_final()?;
    if mlp.input_dim() != 2 {
        return Ok(written);
    }
    let svg = match &cfg {
        RunConfig::Classifier(c) if num_classes(&mlp) == 2 => {
            let data = c.data.load()?;
            classifier_svg(&mlp, &data, c.output.margin, c.output.grid_res)?
        }
        RunConfig::Robust(c) if num_classes(&mlp) == 2 => {
            let data = c.data.load()?;
            classifier_svg(&mlp, &data, c.output.margin, c.output.grid_res)?
        }
        RunConfig::Recon(c) if mlp.output_dim() == 1 => {
            let (points, reference) = c.cloud.load()?;
            let b = inflated_bounds(&reference, c.output.margin);
            let zero = extract_isosurface(&mlp, &b, c.output.grid_res, 0.0)?;
            ContourPlot {
                title: "zero level set",
                bounds: [b[0], b[1]],
                contours: &[zero],
                labeled: None,
                cloud: Some(&points),
            }
            .svg()
        }
        _ => return Ok(written),
    };
    let p = run.plots_dir().join("contours.svg");
    std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

fn classifier_svg(mlp: &Mlp, data: &LabeledBatch, margin: f64, res: usize) -> Result<String> {
    let b = inflated_bounds(&data.x, margin);
    let contours = classifier_contours(mlp, &b, res)?;
    Ok(ContourPlot {
        title: "decision boundary and unit level sets",
        bounds: [b[0], b[1]],
        contours: &contours,
        labeled: Some(data),
        cloud: None,
    }
    .svg())
}

