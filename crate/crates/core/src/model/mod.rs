//! Source-aware assessment network with a small reverse-mode autodiff engine.
//!
//! Images enter as per-patch statistics ([`features`]); encoders are single
//! `tanh` layers standing in for pretrained backbones.

mod checkpoint;
mod config;
mod control;
mod features;
mod network;
mod params;
mod tape;
mod tensor;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, GroupRecord, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use config::{FusionMode, ModelConfig, BACKBONE_GROUPS, PATCH_FEATURES};
pub use control::{parameter_matched_config, parameter_matched_control, ControlPlan, CONTROL_TOLERANCE};
pub use features::{patch_features, tokenize, CaseFeatures};
pub use network::{
    AlignmentFeatures, BranchDiagnostics, EditQualityModel, Prediction, QualityFeatures, SourceTargetFeatures,
};
pub use params::{fnv1a, group_of, Init, ParamSpec, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Matrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("image {width}x{height} is smaller than the {grid}x{grid} patch grid")]
    ImageTooSmall { width: u32, height: u32, grid: usize },
    #[error("cannot decode {0}")]
    Decode(String),
    #[error("bad features: {0}")]
    Feature(String),
    #[error("{0} branch is disabled")]
    BranchDisabled(&'static str),
    #[error("parameters do not fit config: {0}")]
    ParamMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("control has {achieved} parameters vs {reference} ({delta:+.4} relative)")]
    ControlUnmatched { reference: usize, achieved: usize, delta: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
