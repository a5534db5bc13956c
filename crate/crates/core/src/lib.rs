//! Toolkit for assessing text-driven image edits.
//!
//! * [`dataset`]: case schema, manifests, image preparation.
//! * [`subjective`]: z-score normalisation, observer screening, MOS aggregation.
//! * [`metrics`]: correlation metrics, pixel metrics, embedding scorers, baseline runs.
//! * [`model`]: the three-branch source-aware assessment network.
//! * [`training`]: losses, two-stage optimisation, k-fold cross-validation, ablations.
//! * [`rating`]: backend for running the subjective study.

pub mod dataset;
pub mod metrics;
pub mod model;
pub mod rating;
pub mod subjective;
pub mod synth;
pub mod training;
