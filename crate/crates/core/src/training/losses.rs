use serde::{Deserialize, Serialize};

use super::TrainError;

/// Loss forms recorded in report fingerprints.
pub const PLCC_LOSS_FORM: &str = "(1 - plcc(pred, target)) / 2";
pub const RANK_LOSS_FORM: &str =
    "mean over pairs with t_i > t_j + tie_epsilon of max(0, rank_margin + p_j - p_i)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the rank term.
    pub alpha: f64,
    pub rank_margin: f64,
    /// Target differences at or below this count as ties.
    pub tie_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.3, rank_margin: 0.0, tie_epsilon: 1e-8 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, v) in [("alpha", self.alpha), ("rank_margin", self.rank_margin), ("tie_epsilon", self.tie_epsilon)] {
            if !v.is_finite() || v < 0.0 {
                return Err(TrainError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `(1 - PLCC) / 2` and its gradient with respect to `pred`.
///
/// Fewer than two points or a constant series gives loss 1 with zero gradient.
pub fn plcc_loss_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "pred/target length");
    let n = pred.len();
    if n < 2 {
        log::warn!("plcc loss on {n} point(s); defined as 1");
        return (1.0, vec![0.0; n]);
    }
    let mp = pred.iter().sum::<f64>() / n as f64;
    let mt = target.iter().sum::<f64>() / n as f64;
    let a: Vec<f64> = pred.iter().map(|p| p - mp).collect();
    let b: Vec<f64> = target.iter().map(|t| t - mt).collect();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    if saa == 0.0 || sbb == 0.0 {
        log::warn!("plcc loss on a constant series; defined as 1");
        return (1.0, vec![0.0; n]);
    }
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let norm = (saa * sbb).sqrt();
    let r = (sab / norm).clamp(-1.0, 1.0);
    // dr/dp_i = b_i / (|a||b|) - r a_i / |a|²; centring drops out because Σa = Σb = 0
    let grad = a.iter().zip(&b).map(|(ai, bi)| -0.5 * (bi / norm - r * ai / saa)).collect();
    ((1.0 - r) / 2.0, grad)
}

pub fn plcc_loss(pred: &[f64], target: &[f64]) -> f64 {
    plcc_loss_grad(pred, target).0
}

/// Pairwise hinge rank loss and its (sub)gradient; zero valid pairs gives 0.
pub fn rank_loss_grad(pred: &[f64], target: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "pred/target length");
    let n = pred.len();
    let mut grad = vec![0.0; n];
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in 0..n {
            if target[i] > target[j] + cfg.tie_epsilon {
                pairs += 1;
                let h = cfg.rank_margin + pred[j] - pred[i];
                if h > 0.0 {
                    sum += h;
                    grad[j] += 1.0;
                    grad[i] -= 1.0;
                }
            }
        }
    }
    if pairs == 0 {
        return (0.0, grad);
    }
    let p = pairs as f64;
    grad.iter_mut().for_each(|g| *g /= p);
    (sum / p, grad)
}

pub fn rank_loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> f64 {
    rank_loss_grad(pred, target, cfg).0
}

/// `plcc_loss + alpha · rank_loss`
pub fn total_loss_grad(pred: &[f64], target: &[f64], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let (lp, mut g) = plcc_loss_grad(pred, target);
    if cfg.alpha == 0.0 {
        return (lp, g);
    }
    let (lr, gr) = rank_loss_grad(pred, target, cfg);
    g.iter_mut().zip(gr).for_each(|(a, b)| *a += cfg.alpha * b);
    (lp + cfg.alpha * lr, g)
}

pub fn total_loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> f64 {
    total_loss_grad(pred, target, cfg).0
}
