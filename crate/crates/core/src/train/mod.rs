//! Optimizers, PGD attacks and end-to-end training runs with their on-disk
//! artifacts.

mod attack;
mod config;
mod loops;
mod optim;
mod plot;
mod run;

pub use attack::{accuracy, is_correct, pgd_attack, robust_accuracy, AttackConfig, AttackObjective};
pub use config::{
    preset, ClassifierConfig, ClassifierLoss, CloudSource, DataSource, ExtractConfig, MergeRule, OutputConfig,
    ReconTrainConfig, RobustLoss, RobustTrainConfig, RunConfig, PRESETS,
};
pub use loops::{
    classifier_contours, emit_plots, extract_zero_set, train, train_classifier, train_reconstruction, train_robust,
    zero_set_metrics, RunSummary,
};
pub use optim::{optimize_step, OptimConfig, OptimMethod, OptimState};
pub use plot::{curves_svg, ContourPlot, NEGATIVE_COLOR, POSITIVE_COLOR};
pub use run::{MetricsTable, RunDirectory, CONFIG_FILE, FINAL_CHECKPOINT, METRICS_FILE};
