//! Monotonicity-aware training and evaluation for CTR-style recommenders.
//!
//! The pipeline: declare a [`featurespace::FeatureSchema`], fit a
//! [`featurespace::FeatureEncoder`] on training rows, train a baseline
//! [`backbones::Model`], estimate per-field Shapley importance on it
//! ([`importance`]), then retrain with counterfactual/factual neighbor-bucket
//! samples and a pairwise hinge objective ([`synthesizer`], [`trainer`]).
//! [`metrics`] measures AUC, GAUC, relative improvement and the fraction of
//! neighbor pairs ordered consistently with each field's declared direction.

pub mod backbones;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod featurespace;
pub mod importance;
pub mod metrics;
pub mod numcore;
pub mod synthesizer;
pub mod trainer;

pub use error::{Error, Result};
