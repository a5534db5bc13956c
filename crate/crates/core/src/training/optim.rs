use crate::model::{Matrix, ParamStore};

/// Cosine decay from `base` towards 0 over `total` steps.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total)) as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam with bias correction. Tensors whose `trainable` flag is false are left
/// untouched, moments included.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: Vec<u64>,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, m: params.zero_grads(), v: params.zero_grads(), t: vec![0; params.len()] }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix], lr: f64, trainable: &[bool]) {
        for id in 0..params.len() {
            if !trainable[id] {
                continue;
            }
            self.t[id] += 1;
            let t = self.t[id] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (m, v) = (&mut self.m[id].data, &mut self.v[id].data);
            let p = &mut params.value_mut(id).data;
            for (k, g) in grads[id].data.iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}
