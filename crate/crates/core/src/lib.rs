//! Sampling, differentiating and controlling the level sets of small
//! multilayer perceptrons.
//!
//! * [`mlp`]: a minimal `f64` network engine with input jacobians and
//!   parameter VJPs.
//! * [`projection`]: generalized Newton / false-position projection of seeds
//!   onto level sets.
//! * [`sample`]: sample-network handles that make projected points
//!   differentiable in the parameters.
//! * [`losses`]: geometric SVM, adversarial margin and reconstruction losses
//!   plus output-space baselines.
//! * [`recon`]: point clouds, kd-tree queries, iso-contour extraction and
//!   Chamfer/Hausdorff metrics.
//! * [`pl`]: exact compilation of piecewise-linear hypersurfaces into ReLU
//!   networks.
//! * [`train`]: optimizers, PGD attacks, datasets and end-to-end training runs.

pub mod data;
pub mod error;
pub mod field;
pub mod linalg;
pub mod losses;
pub mod mlp;
pub mod pl;
pub mod projection;
pub mod recon;
pub mod rng;
pub mod sample;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use field::{Field, MarginView, ParamField};
pub use linalg::Matrix;
pub use mlp::{Activation, Batch, Mlp, MlpSpec, ParamVector};
pub use projection::{ProjectionConfig, ProjectionRecord};
pub use sample::SampleHandle;
