use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::EditQualityModel;
use super::ModelError;

pub const CONTROL_TOLERANCE: f64 = 0.01;

/// A source-free configuration whose quality branch is widened to make up the
/// parameters the source branch would have added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub config: ModelConfig,
    pub reference_params: usize,
    pub control_params: usize,
    pub quality_hidden_before: usize,
    pub quality_hidden_after: usize,
}

impl ControlPlan {
    /// `(control - reference) / reference`
    pub fn relative_delta(&self) -> f64 {
        (self.control_params as f64 - self.reference_params as f64) / self.reference_params as f64
    }
}

/// Each extra quality hidden unit adds one input row, one bias and one output column.
fn cost_per_quality_unit(c: &ModelConfig) -> usize {
    c.quality_embed + 1 + c.quality_out
}

pub fn parameter_matched_config(reference: &ModelConfig) -> Result<ControlPlan, ModelError> {
    reference.validate()?;
    if !reference.use_source_branch {
        return Err(ModelError::Config("control needs a reference with the source branch enabled".into()));
    }
    let target = reference.param_count();
    let mut control = ModelConfig { use_source_branch: false, ..reference.clone() };
    let base = control.param_count();
    let deficit = target as f64 - base as f64;
    let extra = (deficit / cost_per_quality_unit(&control) as f64).round().max(0.0) as usize;
    control.quality_hidden = reference.quality_hidden + extra;
    let plan = ControlPlan {
        reference_params: target,
        control_params: control.param_count(),
        quality_hidden_before: reference.quality_hidden,
        quality_hidden_after: control.quality_hidden,
        config: control,
    };
    if plan.relative_delta().abs() > CONTROL_TOLERANCE {
        return Err(ModelError::ControlUnmatched {
            reference: plan.reference_params,
            achieved: plan.control_params,
            delta: plan.relative_delta(),
        });
    }
    Ok(plan)
}

/// Freshly initialised control model for `m`'s architecture.
pub fn parameter_matched_control(m: &EditQualityModel, seed: u64) -> Result<EditQualityModel, ModelError> {
    let plan = parameter_matched_config(m.config())?;
    EditQualityModel::new(plan.config, seed)
}
