//! Adversarial generators for labelled feature vectors.
//!
//! Three autoencoder-based generators are provided: `M1` (adversarial
//! autoencoder with a four-mode 2-D mixture prior), `M2` (adds a data-space
//! discriminator) and `M3` (a normal prior with a code generator and an
//! infoGAN-style auxiliary classifier). Around them sit the training
//! schedule, the realism/diversity/Fréchet-distance metrics, and the data
//! plumbing needed to run them on feature CSV files or synthetic corpora.

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod priors;
pub mod rng;
pub mod toy;
pub mod train;

pub use data::{Corpus, Emotion, Standardizer};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use models::{GanModel, ModelKind, ScaleProfile};
pub use train::{TrainPlan, TrainReport};

/// Emotion classes, in label-index order.
pub const CLASS_NAMES: [&str; 4] = ["angry", "sad", "neutral", "happy"];
pub const NUM_CLASSES: usize = 4;
