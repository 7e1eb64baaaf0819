use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::attack::AttackConfig;
use super::optim::{OptimConfig, OptimMethod};
use crate::data::{self, LabeledBatch};
use crate::error::{Error, Result};
use crate::losses::{DistNorm, Ramp, ReconConfig, RobustConfig, SvmConfig};
use crate::mlp::{Activation, Batch, MlpSpec};
use crate::projection::ProjectionConfig;
use crate::recon::load_cloud;

/// How original labels of an IDX file become classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// Keep the ten digit classes.
    Identity,
    /// Digits 0-4 become class 0, 5-9 class 1.
    LowHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Fig1,
    TwoMoons {
        n: usize,
        noise: f64,
        seed: u64,
    },
    Disc {
        n: usize,
        half: f64,
        radius: f64,
        gap: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        subset: Option<usize>,
        merge: MergeRule,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<LabeledBatch> {
        match self {
            DataSource::Fig1 => Ok(data::fig1_fixture()),
            DataSource::TwoMoons { n, noise, seed } => Ok(data::two_moons(*n, *noise, *seed)),
            DataSource::Disc {
                n,
                half,
                radius,
                gap,
                seed,
            } => Ok(data::disc_classification(*n, *half, *radius, *gap, *seed)),
            DataSource::Idx {
                images,
                labels,
                subset,
                merge,
                seed,
            } => {
                let map = match merge {
                    MergeRule::Identity => Default::default(),
                    MergeRule::LowHigh => data::merge_low_high_digits(),
                };
                data::ingest_idx(images, labels, *subset, &map, *seed)
            }
        }
    }
}

/// Point cloud to reconstruct, together with the reference geometry that
/// metrics are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSource {
    /// Noisy samples of a circle about the origin; the reference is the
    /// noise-free circle sampled at `reference_points`.
    Circle {
        n: usize,
        radius: f64,
        noise: f64,
        seed: u64,
        reference_points: usize,
    },
    /// Farthest-point subsample of noisy dense samples along a random
    /// natural cubic spline in `[-1, 1]^3`; the reference is the dense
    /// noise-free curve.
    Spline {
        knot_seed: u64,
        dense: usize,
        n: usize,
        noise: f64,
        seed: u64,
    },
    /// Points read from a text file; the file is also the reference.
    File { path: PathBuf },
}

impl CloudSource {
    /// `(training cloud, reference points)`.
    pub fn load(&self) -> Result<(Batch, Batch)> {
        match self {
            CloudSource::Circle {
                n,
                radius,
                noise,
                seed,
                reference_points,
            } => Ok((
                data::circle_cloud(*n, *radius, *noise, *seed),
                data::circle_cloud(*reference_points, *radius, 0.0, seed ^ 1),
            )),
            CloudSource::Spline {
                knot_seed,
                dense,
                n,
                noise,
                seed,
            } => {
                let curve = data::random_spline(*knot_seed);
                let clean = curve.sample(*dense);
                let noisy = data::gaussian_noise(&clean, *noise, *seed);
                Ok((data::farthest_point_sampling(&noisy, *n, seed ^ 1)?, clean))
            }
            CloudSource::File { path } => {
                let c = load_cloud(path)?;
                Ok((c.points().clone(), c.points().clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLoss {
    Xent,
    Hinge,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustLoss {
    /// Adversarial margin loss on boundary samples.
    Margin,
    /// Standard cross-entropy baseline.
    Xent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Evaluate expensive metrics every this many epochs; 0 only at the end.
    pub eval_every: usize,
    /// Grid nodes per axis for contour plots and zero-set extraction.
    pub grid_res: usize,
    /// Fraction by which the data bounding box is grown for plots and
    /// extraction.
    pub margin: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            checkpoint_every: 0,
            eval_every: 0,
            grid_res: 200,
            margin: 0.25,
        }
    }
}

impl OutputConfig {
    pub fn due(every: usize, epoch: usize, epochs: usize) -> bool {
        epoch + 1 == epochs || (every > 0 && (epoch + 1) % every == 0)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_res < 2 || !(self.margin >= 0.0) {
            return Err(Error::Config("grid_res must be >= 2 and margin >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub seed: u64,
    pub model: MlpSpec,
    pub optim: OptimConfig,
    pub data: DataSource,
    #[serde(default)]
    pub test: Option<DataSource>,
    pub loss: ClassifierLoss,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustTrainConfig {
    pub seed: u64,
    pub model: MlpSpec,
    pub optim: OptimConfig,
    pub data: DataSource,
    #[serde(default)]
    pub test: Option<DataSource>,
    pub loss: RobustLoss,
    /// Leading epochs trained with cross-entropy, so that a decision
    /// boundary exists near the data before margin training starts.
    #[serde(default)]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub robust: RobustConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Grid nodes per axis.
    pub res: usize,
    /// Points sampled from the extracted zero set for metrics.
    pub metric_points: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            res: 100,
            metric_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconTrainConfig {
    pub seed: u64,
    pub model: MlpSpec,
    pub optim: OptimConfig,
    pub cloud: CloudSource,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Any training run, tagged by `kind` in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunConfig {
    Classifier(ClassifierConfig),
    Robust(RobustTrainConfig),
    Recon(ReconTrainConfig),
}

impl RunConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            RunConfig::Classifier(_) => "classifier",
            RunConfig::Robust(_) => "robust",
            RunConfig::Recon(_) => "recon",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Classifier(c) => c.seed,
            RunConfig::Robust(c) => c.seed,
            RunConfig::Recon(c) => c.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::Classifier(c) => {
                c.optim.validate()?;
                c.svm.validate()?;
                c.projection.validate()?;
                c.output.validate()
            }
            RunConfig::Robust(c) => {
                c.optim.validate()?;
                c.robust.validate()?;
                c.attack.validate()?;
                c.projection.validate()?;
                c.output.validate()
            }
            RunConfig::Recon(c) => {
                c.optim.validate()?;
                c.recon.validate()?;
                c.projection.validate()?;
                c.output.validate()?;
                if c.extract.res < 2 || c.extract.metric_points == 0 {
                    return Err(Error::Config("extract res must be >= 2 and metric_points >= 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to toml")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
        Self::from_table(value)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply dotted `key=value` overrides, e.g. `optim.lr=0.01`. Values are
    /// read as TOML and fall back to plain strings.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).expect("configs serialize to toml");
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            set_dotted(&mut table, key.trim(), value)?;
        }
        Self::from_table(table)
    }
}

fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.message().to_string(),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "fig1",
    "fig1_xent",
    "mnist_binary",
    "two_moons_robust",
    "two_moons_xent",
    "mnist_robust",
    "circle",
    "spline",
    "cloud_file",
];

fn mnist_source(subset: usize, merge: MergeRule) -> DataSource {
    DataSource::Idx {
        images: "data/train-images-idx3-ubyte".into(),
        labels: "data/train-labels-idx1-ubyte".into(),
        subset: Some(subset),
        merge,
        seed: 0,
    }
}

fn two_moons_robust(loss: RobustLoss) -> RobustTrainConfig {
    RobustTrainConfig {
        seed: 0,
        model: MlpSpec::new(2, &[32, 32], 2),
        optim: OptimConfig {
            lr: 0.005,
            epochs: 60,
            batch_size: 16,
            ..OptimConfig::default()
        },
        data: DataSource::TwoMoons {
            n: 200,
            noise: 0.1,
            seed: 1,
        },
        test: Some(DataSource::TwoMoons {
            n: 200,
            noise: 0.1,
            seed: 2,
        }),
        loss,
        warmup_epochs: 5,
        robust: RobustConfig {
            eps_train: 0.2,
            ..RobustConfig::default()
        },
        attack: AttackConfig {
            eps_attack: 0.15,
            ..AttackConfig::default()
        },
        projection: ProjectionConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Named starting configurations. Paper hyperparameters are the defaults of
/// the matching preset; desk-scale presets shrink data and widths.
pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "fig1" | "fig1_xent" => RunConfig::Classifier(ClassifierConfig {
            seed: 0,
            model: MlpSpec::fc1(2, 2),
            optim: OptimConfig {
                method: OptimMethod::Adam,
                lr: 0.001,
                epochs: 1000,
                batch_size: 1,
                ..OptimConfig::default()
            },
            data: DataSource::Fig1,
            test: None,
            loss: if name == "fig1" {
                ClassifierLoss::Svm
            } else {
                ClassifierLoss::Xent
            },
            svm: SvmConfig {
                lambda: 0.001,
                ..SvmConfig::default()
            },
            projection: ProjectionConfig::default().with_iters(20),
            output: OutputConfig {
                margin: 0.1,
                ..OutputConfig::default()
            },
        }),
        "mnist_binary" => RunConfig::Classifier(ClassifierConfig {
            seed: 0,
            model: MlpSpec::fc1(784, 2),
            optim: OptimConfig {
                method: OptimMethod::SgdMomentum,
                lr: 0.02,
                momentum: 0.9,
                nesterov: true,
                weight_decay: 1e-4,
                lr_schedule: [50, 100, 120, 140, 160, 180].iter().map(|&e| (e, 0.5)).collect(),
                epochs: 200,
                batch_size: 32,
            },
            data: mnist_source(600, MergeRule::LowHigh),
            test: None,
            loss: ClassifierLoss::Svm,
            svm: SvmConfig {
                lambda: 0.01,
                alpha: -1.0,
                dist_norm: DistNorm::Linf,
                lambda_schedule: Some(Ramp {
                    start: 0.01,
                    end: 0.2,
                    epochs: 50,
                }),
            },
            projection: ProjectionConfig::default().with_iters(20),
            output: OutputConfig::default(),
        }),
        "two_moons_robust" => RunConfig::Robust(two_moons_robust(RobustLoss::Margin)),
        "two_moons_xent" => RunConfig::Robust(two_moons_robust(RobustLoss::Xent)),
        "mnist_robust" => RunConfig::Robust(RobustTrainConfig {
            seed: 0,
            model: MlpSpec::fc1_width(784, 10, 256),
            optim: OptimConfig {
                method: OptimMethod::Adam,
                lr: 0.001,
                epochs: 200,
                batch_size: 128,
                ..OptimConfig::default()
            },
            data: mnist_source(1000, MergeRule::Identity),
            test: None,
            loss: RobustLoss::Margin,
            warmup_epochs: 0,
            robust: RobustConfig::default(),
            attack: AttackConfig {
                eps_attack: 0.3,
                steps: 40,
                step_size: 0.01,
                clip: Some((0.0, 1.0)),
                ..AttackConfig::default()
            },
            projection: ProjectionConfig::default(),
            output: OutputConfig::default(),
        }),
        "circle" => RunConfig::Recon(ReconTrainConfig {
            seed: 0,
            model: MlpSpec::fc1_width(2, 1, 64).with_activation(Activation::Softplus {
                beta: Activation::DEFAULT_SOFTPLUS_BETA,
            }),
            optim: OptimConfig {
                method: OptimMethod::Adam,
                lr: 0.001,
                lr_schedule: vec![(500, 0.5), (1500, 0.5), (3500, 0.5)],
                epochs: 400,
                batch_size: 10,
                ..OptimConfig::default()
            },
            cloud: CloudSource::Circle {
                n: 100,
                radius: 1.0,
                noise: 0.0,
                seed: 1,
                reference_points: 2000,
            },
            recon: ReconConfig {
                levels: vec![-0.1, 0.0, 0.1],
                samples_per_level: 10,
                noise_sigma: 0.1,
                uniform_seeds: 10,
                uniform_bounds: vec![(-1.5, 1.5); 2],
                ..ReconConfig::default()
            },
            projection: ProjectionConfig::default().with_iters(10),
            extract: ExtractConfig {
                res: 200,
                metric_points: 2000,
            },
            output: OutputConfig::default(),
        }),
        "spline" => RunConfig::Recon(ReconTrainConfig {
            seed: 0,
            model: MlpSpec::fc1_width(3, 2, 64).with_activation(Activation::Softplus {
                beta: Activation::DEFAULT_SOFTPLUS_BETA,
            }),
            optim: OptimConfig {
                method: OptimMethod::Adam,
                lr: 0.001,
                lr_schedule: vec![(100, 0.5), (150, 0.5), (200, 0.5)],
                epochs: 250,
                batch_size: 10,
                ..OptimConfig::default()
            },
            cloud: CloudSource::Spline {
                knot_seed: 3,
                dense: 5000,
                n: 300,
                noise: 0.005,
                seed: 1,
            },
            recon: ReconConfig {
                levels: vec![0.0],
                samples_per_level: 10,
                noise_sigma: 0.05,
                uniform_seeds: 40,
                uniform_bounds: vec![(-1.2, 1.2); 3],
                ..ReconConfig::default()
            },
            projection: ProjectionConfig::default().with_iters(10),
            extract: ExtractConfig {
                res: 40,
                metric_points: 2000,
            },
            output: OutputConfig::default(),
        }),
        "cloud_file" => RunConfig::Recon(ReconTrainConfig {
            seed: 0,
            model: MlpSpec::fc2(3, 1).with_activation(Activation::Softplus {
                beta: Activation::DEFAULT_SOFTPLUS_BETA,
            }),
            optim: OptimConfig {
                method: OptimMethod::Adam,
                lr: 0.001,
                lr_schedule: vec![(500, 0.5), (1500, 0.5), (3500, 0.5)],
                epochs: 5000,
                batch_size: 10,
                ..OptimConfig::default()
            },
            cloud: CloudSource::File {
                path: "data/cloud.xyz".into(),
            },
            recon: ReconConfig {
                levels: vec![-0.05, 0.0, 0.05],
                ..ReconConfig::default()
            },
            projection: ProjectionConfig::default().with_iters(10),
            extract: ExtractConfig::default(),
            output: OutputConfig::default(),
        }),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; known: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_round_trips_through_toml() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let back = RunConfig::from_toml(&cfg.to_toml(), Path::new("p.toml")).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = preset("fig1").unwrap();
        let o = cfg
            .with_overrides(&["optim.lr=0.01".into(), "seed=9".into(), "loss=xent".into()])
            .unwrap();
        let RunConfig::Classifier(c) = o else { panic!() };
        assert_eq!(c.optim.lr, 0.01);
        assert_eq!(c.seed, 9);
        assert_eq!(c.loss, ClassifierLoss::Xent);
        assert!(matches!(cfg.with_overrides(&["optim.lr=-1".into()]), Err(Error::Config(_))));
        assert!(matches!(cfg.with_overrides(&["optim.bogus=1".into()]), Err(Error::Config(_))));
        assert!(matches!(cfg.with_overrides(&["nokey".into()]), Err(Error::Config(_))));
    }

    #[test]
    fn parse_errors_carry_a_line() {
        match RunConfig::from_toml("kind = \"classifier\"\nseed = [", Path::new("c.toml")) {
            Err(Error::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("{other:?}"),
        }
        assert!(matches!(preset("nope"), Err(Error::Config(_))));
    }
}
