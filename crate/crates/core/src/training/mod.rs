//! Losses, two-stage optimisation, k-fold cross-validation and ablations.

mod cv;
mod folds;
mod losses;
mod optim;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, ModelError};
use crate::subjective::DIM_OVERALL;

pub use cv::{
    config_fingerprint, config_label, run_ablation, run_cross_validation, AblationVariant, CrossValidation,
    EvalReport, FoldMetrics, FoldPrediction, FoldResult,
};
pub use folds::{make_folds, FoldSplit};
pub use losses::{
    plcc_loss, plcc_loss_grad, rank_loss, rank_loss_grad, total_loss, total_loss_grad, LossConfig, PLCC_LOSS_FORM,
    RANK_LOSS_FORM,
};
pub use optim::{cosine_lr, Adam};
pub use trainer::{
    backbone_checksum, evaluate, is_backbone, make_batches, prepare_items, summarize, train, CasePrediction,
    EpochRecord, Evaluation, TrainConfig, TrainHistory, TrainItem,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("case {0} has no MOS")]
    MissingMos(String),
    #[error("need at least 2 training cases, got {0}")]
    TooFewCases(usize),
    #[error("non-finite loss in stage {stage}, epoch {epoch}")]
    NonFiniteLoss { stage: u8, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    /// MOS dimension used as the training target.
    pub target_dim: String,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 10, target_dim: DIM_OVERALL.to_string() }
    }
}

/// Everything a training or ablation run reads from its config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub cv: CvConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, TrainError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if self.cv.k < 2 {
            return Err(TrainError::Config("cv.k must be at least 2".into()));
        }
        Ok(())
    }
}
