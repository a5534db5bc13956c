use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::folds::{make_folds, FoldSplit};
use super::losses::{LossConfig, PLCC_LOSS_FORM, RANK_LOSS_FORM};
use super::trainer::{evaluate, train, TrainConfig, TrainHistory, TrainItem};
use super::TrainError;
use crate::model::{parameter_matched_config, ControlPlan, EditQualityModel, FusionMode, ModelConfig};
use crate::subjective::AffineMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub srocc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    /// RMSE after mapping predictions and targets onto the 0-10 scale.
    pub rmse_0_10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub test_cases: Vec<String>,
    pub n_train: usize,
    pub metrics: Option<FoldMetrics>,
    pub final_train_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub fold: usize,
    pub case_id: String,
    pub prediction: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub fingerprint: String,
    pub k: usize,
    pub seed: u64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub loss_config: LossConfig,
    pub plcc_loss_form: String,
    pub rank_loss_form: String,
    pub param_count: usize,
    pub control: Option<ControlPlan>,
    pub folds: Vec<FoldResult>,
    /// Arithmetic mean over folds with metrics.
    pub mean: Option<FoldMetrics>,
    /// Some fold failed or was degenerate.
    pub partial: bool,
    pub predictions: Vec<FoldPrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        serde_json::from_str(text).map_err(|e| TrainError::Config(format!("bad report: {e}")))
    }

    /// Folds exactly as evaluated.
    pub fn fold_split(&self) -> FoldSplit {
        FoldSplit { k: self.k, seed: self.seed, folds: self.folds.iter().map(|f| f.test_cases.clone()).collect() }
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    loss: &'a LossConfig,
    plcc_loss_form: &'a str,
    rank_loss_form: &'a str,
    k: usize,
}

/// SHA-256 of the canonical JSON of everything that shapes a run.
pub fn config_fingerprint(model: &ModelConfig, train: &TrainConfig, loss: &LossConfig, k: usize) -> String {
    let input = FingerprintInput {
        model,
        train,
        loss,
        plcc_loss_form: PLCC_LOSS_FORM,
        rank_loss_form: RANK_LOSS_FORM,
        k,
    };
    hex::encode(Sha256::digest(serde_json::to_vec(&input).expect("fingerprint input serializes")))
}

fn mean_metrics(ms: &[FoldMetrics]) -> Option<FoldMetrics> {
    if ms.is_empty() {
        return None;
    }
    let n = ms.len() as f64;
    let avg = |f: fn(&FoldMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
    let rmse_0_10 = ms.iter().map(|m| m.rmse_0_10).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
    Some(FoldMetrics {
        srocc: avg(|m| m.srocc),
        plcc: avg(|m| m.plcc),
        krcc: avg(|m| m.krcc),
        rmse: avg(|m| m.rmse),
        rmse_0_10,
    })
}

/// Output of a cross-validation run: the report plus per-fold artefacts.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub models: Vec<Option<EditQualityModel>>,
    pub histories: Vec<Option<TrainHistory>>,
}

/// `k` rounds of fresh-initialised training and held-out evaluation, run serially.
/// Fold `i` uses seed `tc.seed + i` for both initialisation and batch order.
pub fn run_cross_validation(
    items: &[TrainItem],
    model_cfg: &ModelConfig,
    tc: &TrainConfig,
    lc: &LossConfig,
    k: usize,
    rescale: Option<AffineMap>,
    label: &str,
) -> Result<CrossValidation, TrainError> {
    model_cfg.validate()?;
    tc.validate()?;
    lc.validate()?;
    let ids: Vec<String> = items.iter().map(|i| i.case_id.clone()).collect();
    let split = make_folds(&ids, k, tc.seed)?;
    let by_id: std::collections::BTreeMap<&str, &TrainItem> = items.iter().map(|i| (i.case_id.as_str(), i)).collect();

    let mut folds = Vec::with_capacity(k);
    let mut predictions = Vec::new();
    let mut models = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for (i, test_ids) in split.folds.iter().enumerate() {
        let seed = tc.seed.wrapping_add(i as u64);
        let train_items: Vec<TrainItem> = split.train_ids(i).iter().map(|id| by_id[id.as_str()].clone()).collect();
        let test_items: Vec<TrainItem> = test_ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
        let mut result = FoldResult {
            fold: i,
            seed,
            test_cases: test_ids.clone(),
            n_train: train_items.len(),
            metrics: None,
            final_train_loss: None,
            error: None,
        };
        let outcome = (|| {
            let mut model = EditQualityModel::new(model_cfg.clone(), seed)?;
            let fold_tc = TrainConfig { seed, ..tc.clone() };
            let history = train(&mut model, &train_items, &fold_tc, lc)?;
            let eval = evaluate(&model, &test_items)?;
            Ok::<_, TrainError>((model, history, eval))
        })();
        match outcome {
            Ok((model, history, eval)) => {
                result.final_train_loss = history.epochs.last().map(|e| e.mean_loss);
                predictions.extend(eval.predictions.iter().map(|p| FoldPrediction {
                    fold: i,
                    case_id: p.case_id.clone(),
                    prediction: p.prediction,
                    target: p.target,
                }));
                match eval.summary {
                    Some(s) => {
                        let rmse_0_10 = rescale.map(|m| {
                            let se: f64 = eval
                                .predictions
                                .iter()
                                .map(|p| (m.apply(p.prediction) - m.apply(p.target)).powi(2))
                                .sum();
                            (se / eval.predictions.len() as f64).sqrt()
                        });
                        result.metrics =
                            Some(FoldMetrics { srocc: s.srocc, plcc: s.plcc, krcc: s.krcc, rmse: s.rmse, rmse_0_10 });
                    }
                    None => result.error = eval.degenerate.map(|d| format!("degenerate: {d}")),
                }
                models.push(Some(model));
                histories.push(Some(history));
            }
            Err(e) => {
                log::error!("fold {i} failed: {e}");
                result.error = Some(e.to_string());
                models.push(None);
                histories.push(None);
            }
        }
        folds.push(result);
    }

    let ok: Vec<FoldMetrics> = folds.iter().filter_map(|f| f.metrics).collect();
    let report = EvalReport {
        label: label.to_string(),
        fingerprint: config_fingerprint(model_cfg, tc, lc, k),
        k,
        seed: tc.seed,
        model_config: model_cfg.clone(),
        train_config: tc.clone(),
        loss_config: *lc,
        plcc_loss_form: PLCC_LOSS_FORM.to_string(),
        rank_loss_form: RANK_LOSS_FORM.to_string(),
        param_count: model_cfg.param_count(),
        control: None,
        partial: ok.len() != folds.len(),
        mean: mean_metrics(&ok),
        folds,
        predictions,
    };
    Ok(CrossValidation { report, models, histories })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    NoText,
    NoSource,
    FusionIdentity,
    FusionAttention,
    FusionConcat,
    ParamMatchedControl,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::NoText,
        AblationVariant::NoSource,
        AblationVariant::FusionIdentity,
        AblationVariant::FusionAttention,
        AblationVariant::FusionConcat,
        AblationVariant::ParamMatchedControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::NoText => "no_text",
            AblationVariant::NoSource => "no_source",
            AblationVariant::FusionIdentity => "fusion_identity",
            AblationVariant::FusionAttention => "fusion_attention",
            AblationVariant::FusionConcat => "fusion_concat",
            AblationVariant::ParamMatchedControl => "param_matched_control",
        }
    }

    /// Variant config derived from `base`; the control also returns its plan.
    pub fn apply(self, base: &ModelConfig) -> Result<(ModelConfig, Option<ControlPlan>), TrainError> {
        let cfg = match self {
            AblationVariant::NoText => ModelConfig { use_text_branch: false, ..base.clone() },
            AblationVariant::NoSource => ModelConfig { use_source_branch: false, ..base.clone() },
            AblationVariant::FusionIdentity => ModelConfig { fusion: FusionMode::Identity, ..base.clone() },
            AblationVariant::FusionAttention => ModelConfig { fusion: FusionMode::Attention, ..base.clone() },
            AblationVariant::FusionConcat => ModelConfig { fusion: FusionMode::Concat, ..base.clone() },
            AblationVariant::ParamMatchedControl => {
                let plan = parameter_matched_config(base)?;
                return Ok((plan.config.clone(), Some(plan)));
            }
        };
        cfg.validate()?;
        Ok((cfg, None))
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationVariant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown variant {s:?}")))
    }
}

/// Report label for a plain training run.
pub fn config_label(cfg: &ModelConfig) -> String {
    match (cfg.use_text_branch, cfg.use_source_branch) {
        (true, true) => format!("fusion_{}", cfg.fusion.as_str()),
        (false, true) => "no_text".to_string(),
        (true, false) => "no_source".to_string(),
        (false, false) => "no_text_no_source".to_string(),
    }
}

pub fn run_ablation(
    variant: AblationVariant,
    items: &[TrainItem],
    base: &ModelConfig,
    tc: &TrainConfig,
    lc: &LossConfig,
    k: usize,
    rescale: Option<AffineMap>,
) -> Result<CrossValidation, TrainError> {
    let (cfg, plan) = variant.apply(base)?;
    let mut cv = run_cross_validation(items, &cfg, tc, lc, k, rescale, variant.as_str())?;
    cv.report.control = plan;
    Ok(cv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(v.as_str().parse::<AblationVariant>().unwrap(), v);
        }
        assert!("bogus".parse::<AblationVariant>().is_err());
    }

    #[test]
    fn head_width_equation_for_every_variant() {
        let base = ModelConfig::stub();
        for v in AblationVariant::ALL {
            let (cfg, _) = v.apply(&base).unwrap();
            let m = EditQualityModel::new(cfg.clone(), 0).unwrap();
            let expected = usize::from(cfg.use_text_branch) * cfg.embed_dim
                + usize::from(cfg.use_source_branch) * cfg.source_out
                + cfg.quality_out;
            assert_eq!(cfg.head_input_width(), expected, "{v}");
            assert_eq!(m.params().get("head.l1.weight").unwrap().rows, expected, "{v}");
        }
    }

    #[test]
    fn fusion_concat_is_the_default_label() {
        let base = ModelConfig::default();
        let (cfg, _) = AblationVariant::FusionConcat.apply(&base).unwrap();
        assert_eq!(cfg, base);
        assert_eq!(config_label(&base), AblationVariant::FusionConcat.as_str());
    }

    #[test]
    fn mean_is_arithmetic() {
        let a = FoldMetrics { srocc: 0.5, plcc: 0.25, krcc: 0.0, rmse: 2.0, rmse_0_10: Some(1.0) };
        let b = FoldMetrics { srocc: 1.0, plcc: 0.75, krcc: 1.0, rmse: 4.0, rmse_0_10: None };
        let m = mean_metrics(&[a, b]).unwrap();
        assert_eq!((m.srocc, m.plcc, m.krcc, m.rmse, m.rmse_0_10), (0.75, 0.5, 0.5, 3.0, None));
    }
}
