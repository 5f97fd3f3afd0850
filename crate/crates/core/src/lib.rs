//! Fingerprinting AI coding agents from pull-request artifacts.
//!
//! The pipeline runs corpus ingestion, feature extraction, feature
//! reduction, tree-ensemble training, cross-validated evaluation and
//! importance fingerprints. Each stage is usable on its own; the
//! [`artifact`] module holds the on-disk formats that connect them.

pub mod artifact;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod fingerprint;
pub mod learn;
pub mod reduce;
pub mod stats;
pub mod synth;
pub mod textparse;

pub use error::{Error, Result};
