//! Referral-to-procedure prediction toolkit.
//!
//! The crate covers the whole desk-scale pipeline: loading and enriching
//! diagnostic referral corpora, turning text into dense vectors, injecting
//! controlled text noise, rebalancing training splits, training tree, margin
//! and neural classifiers, stratified cross-validation with bootstrap
//! intervals, threshold sweeps, paired significance tests, a 2-D linear
//! projection, and the capture-efficiency economics.
//!
//! Everything that draws random numbers takes an explicit seed; parallel and
//! serial runs produce identical results.

pub mod dataset;
pub mod econ;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod matrix;
pub mod model;
pub mod perturb;
pub mod project;
pub mod resample;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use dataset::{CodeDictionary, DatasetSummary, ReferralDataset, ReferralRecord, Schema};
pub use embed::{EmbeddedDataset, EmbeddingMatrix, HashingEmbedderConfig, Variant};
pub use error::{Error, Result};
pub use eval::{BootstrapSpec, CvReport, FoldPlan, MetricSet, ThresholdCurve};
pub use matrix::Matrix;
pub use model::{ClassifierSpec, Hyperparameters, ModelKind, TrainedClassifier};
pub use perturb::{NoiseKind, NoiseSpec};
pub use resample::{ResampleSpec, Strategy};
