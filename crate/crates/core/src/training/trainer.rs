use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{total_loss_grad, LossConfig};
use super::optim::{cosine_lr, Adam};
use super::TrainError;
use crate::dataset::{EditCase, ImageProvider};
use crate::metrics::{correlation_summary, CorrelationSummary, PairedSeries};
use crate::model::{group_of, CaseFeatures, EditQualityModel, ModelConfig, BACKBONE_GROUPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Linear probing: backbone groups frozen.
    pub stage1_epochs: usize,
    /// Everything trainable.
    pub stage2_epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            stage1_epochs: 40,
            stage2_epochs: 20,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.stage1_epochs + self.stage2_epochs
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(TrainError::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(TrainError::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub case_id: String,
    pub features: CaseFeatures,
    pub target: f64,
}

/// Features and targets for `cases`; every case needs a finite target.
pub fn prepare_items<'a>(
    cases: impl IntoIterator<Item = &'a EditCase>,
    targets: &BTreeMap<String, f64>,
    images: &dyn ImageProvider,
    cfg: &ModelConfig,
) -> Result<Vec<TrainItem>, TrainError> {
    let mut items = Vec::new();
    for case in cases {
        let target = *targets.get(&case.case_id).ok_or_else(|| TrainError::MissingMos(case.case_id.clone()))?;
        if !target.is_finite() {
            return Err(TrainError::MissingMos(case.case_id.clone()));
        }
        let features = CaseFeatures::extract(cfg, case, images)?;
        items.push(TrainItem { case_id: case.case_id.clone(), features, target });
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    /// Counted across both stages, from 1.
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub backbone_checksum_initial: String,
    pub backbone_checksum_after_stage1: String,
    pub stage1_trainable_params: usize,
    pub stage2_trainable_params: usize,
}

/// Shuffled index batches; a trailing batch of one joins the previous batch.
pub fn make_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

pub fn is_backbone(name: &str) -> bool {
    BACKBONE_GROUPS.contains(&group_of(name))
}

pub fn backbone_checksum(model: &EditQualityModel) -> String {
    model.params().checksum(&BACKBONE_GROUPS)
}

/// Two-stage training: backbone frozen for `stage1_epochs`, then everything for
/// `stage2_epochs`. Each stage gets a fresh optimizer and its own cosine decay.
pub fn train(
    model: &mut EditQualityModel,
    items: &[TrainItem],
    tc: &TrainConfig,
    lc: &LossConfig,
) -> Result<TrainHistory, TrainError> {
    tc.validate()?;
    lc.validate()?;
    if items.len() < 2 {
        return Err(TrainError::TooFewCases(items.len()));
    }
    for it in items {
        model.check_features(&it.features)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let initial = backbone_checksum(model);
    let mut after_stage1 = initial.clone();
    let mut history = Vec::new();
    let mut trainable_counts = [0usize; 2];
    let steps_per_epoch = make_batches(items.len(), tc.batch_size, &mut ChaCha8Rng::seed_from_u64(0)).len();
    let mut epoch_no = 0;

    for (stage, epochs) in [(1u8, tc.stage1_epochs), (2u8, tc.stage2_epochs)] {
        let mask: Vec<bool> = model.params().names().iter().map(|n| stage == 2 || !is_backbone(n)).collect();
        trainable_counts[stage as usize - 1] =
            mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| model.params().value(i).len()).sum();
        let mut opt = Adam::new(model.params(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
        let total_steps = epochs * steps_per_epoch;
        let mut step = 0;
        for _ in 0..epochs {
            epoch_no += 1;
            let lr_start = cosine_lr(tc.lr, step, total_steps);
            let mut loss_sum = 0.0;
            let batches = make_batches(items.len(), tc.batch_size, &mut rng);
            for batch in &batches {
                let lr = cosine_lr(tc.lr, step, total_steps);
                let mut grads = model.params().zero_grads();
                let loss = {
                    let mut tapes = Vec::with_capacity(batch.len());
                    for &i in batch {
                        tapes.push(model.record(&items[i].features)?);
                    }
                    let pred: Vec<f64> = tapes.iter().map(|(t, s)| t.value(*s).data[0]).collect();
                    let target: Vec<f64> = batch.iter().map(|&i| items[i].target).collect();
                    let (loss, g) = total_loss_grad(&pred, &target, lc);
                    if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                        return Err(TrainError::NonFiniteLoss { stage, epoch: epoch_no });
                    }
                    for ((t, s), gi) in tapes.iter().zip(&g) {
                        if *gi != 0.0 {
                            t.backward(*s, *gi, &mut grads);
                        }
                    }
                    loss
                };
                opt.step(model.params_mut(), &grads, lr, &mask);
                loss_sum += loss;
                step += 1;
            }
            let mean_loss = loss_sum / batches.len() as f64;
            log::debug!("stage {stage} epoch {epoch_no}: loss {mean_loss:.6}");
            history.push(EpochRecord { stage, epoch: epoch_no, mean_loss, lr_start });
        }
        if stage == 1 {
            after_stage1 = backbone_checksum(model);
        }
    }
    Ok(TrainHistory {
        epochs: history,
        backbone_checksum_initial: initial,
        backbone_checksum_after_stage1: after_stage1,
        stage1_trainable_params: trainable_counts[0],
        stage2_trainable_params: trainable_counts[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub case_id: String,
    pub prediction: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub predictions: Vec<CasePrediction>,
    pub summary: Option<CorrelationSummary>,
    /// Why `summary` is missing, e.g. constant predictions.
    pub degenerate: Option<String>,
}

/// Correlates stored predictions with their targets.
pub fn summarize(predictions: Vec<CasePrediction>) -> Evaluation {
    let p: Vec<f64> = predictions.iter().map(|c| c.prediction).collect();
    let t: Vec<f64> = predictions.iter().map(|c| c.target).collect();
    match PairedSeries::new(&p, &t).and_then(|ps| correlation_summary(&ps)) {
        Ok(s) => Evaluation { predictions, summary: Some(s), degenerate: None },
        Err(e) => {
            log::warn!("evaluation degenerate: {e}");
            Evaluation { predictions, summary: None, degenerate: Some(e.to_string()) }
        }
    }
}

pub fn evaluate(model: &EditQualityModel, items: &[TrainItem]) -> Result<Evaluation, TrainError> {
    let mut predictions = Vec::with_capacity(items.len());
    for it in items {
        let prediction = model.predict(&it.features)?;
        predictions.push(CasePrediction { case_id: it.case_id.clone(), prediction, target: it.target });
    }
    Ok(summarize(predictions))
}
