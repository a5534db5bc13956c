use serde::{Deserialize, Serialize};

use super::config::{FusionMode, ModelConfig, PATCH_FEATURES};
use super::features::CaseFeatures;
use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Matrix;
use super::ModelError;
use crate::dataset::{EditCase, ImageProvider};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentFeatures {
    pub e_bv: Vec<f64>,
    /// Text embedding after attending over the visual tokens.
    pub e_bt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceTargetFeatures {
    /// Source embedding; empty in identity mode.
    pub f: Vec<f64>,
    pub f_star: Vec<f64>,
    /// What the source head actually received.
    pub fusion_input: Vec<f64>,
    pub o_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityFeatures {
    pub q: Vec<f64>,
}

/// Head output with every other branch's slice of the head input zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchDiagnostics {
    pub alignment: Option<f64>,
    pub source: Option<f64>,
    pub quality: f64,
    pub text_image_cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub score: f64,
    pub diagnostics: BranchDiagnostics,
}

struct Graph {
    e_bv: Var,
    e_bt: Option<Var>,
    cosine: Option<Var>,
    f: Option<Var>,
    fusion_input: Option<Var>,
    o_s: Option<Var>,
    q: Var,
    head_in: Var,
    score: Var,
}

/// Three-branch assessment network: text-image alignment, source-target
/// relation and edited-image quality, fused by a two-layer regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct EditQualityModel {
    config: ModelConfig,
    params: ParamStore,
}

fn linear(t: &mut Tape<'_>, x: Var, prefix: &str) -> Var {
    let w = t.param_named(&format!("{prefix}.weight"));
    let b = t.param_named(&format!("{prefix}.bias"));
    let h = t.matmul(x, w);
    t.add_row_bias(h, b)
}

fn mlp2(t: &mut Tape<'_>, x: Var, prefix: &str) -> Var {
    let h = linear(t, x, &format!("{prefix}.l1"));
    let h = t.tanh(h);
    linear(t, h, &format!("{prefix}.l2"))
}

impl EditQualityModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ParamStore::new(&config.param_specs(), seed);
        Ok(EditQualityModel { config, params })
    }

    /// Checks that `params` has exactly the tensors and shapes `config` needs.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != params.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (i, s) in specs.iter().enumerate() {
            if params.name(i) != s.name || params.value(i).shape() != (s.rows, s.cols) {
                return Err(ModelError::ParamMismatch(format!(
                    "tensor {i}: expected {} {:?}, found {} {:?}",
                    s.name,
                    (s.rows, s.cols),
                    params.name(i),
                    params.value(i).shape()
                )));
            }
            if !params.value(i).is_finite() {
                return Err(ModelError::ParamMismatch(format!("tensor {} has non-finite values", s.name)));
            }
        }
        Ok(EditQualityModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn check_features(&self, x: &CaseFeatures) -> Result<(), ModelError> {
        let n = self.config.grid * self.config.grid;
        for (name, m) in [("edited", &x.edited), ("source", &x.source)] {
            if m.shape() != (n, PATCH_FEATURES) {
                return Err(ModelError::Feature(format!(
                    "{name} patches have shape {:?}, expected {:?}",
                    m.shape(),
                    (n, PATCH_FEATURES)
                )));
            }
            if !m.is_finite() {
                return Err(ModelError::Feature(format!("{name} patches are not finite")));
            }
        }
        if x.tokens.is_empty() || x.tokens.iter().any(|&t| t >= self.config.vocab_size) {
            return Err(ModelError::Feature("token ids outside vocabulary".into()));
        }
        Ok(())
    }

    fn source_encoder(&self) -> &'static str {
        if self.config.shared_source_encoder {
            "visual_encoder"
        } else {
            "source_encoder"
        }
    }

    fn build(&self, t: &mut Tape<'_>, x: &CaseFeatures) -> Graph {
        let cfg = &self.config;
        let pe = t.input(x.edited.clone());
        let tv = linear(t, pe, "visual_encoder");
        let tv = t.tanh(tv);
        let e_bv = t.mean_rows(tv);

        let (mut e_bt, mut cosine, mut a) = (None, None, None);
        if cfg.use_text_branch {
            let emb = t.param_named("text_encoder.embedding");
            let xt = t.gather_rows(emb, &x.tokens);
            let wq = t.param_named("cross_attention.wq");
            let wk = t.param_named("cross_attention.wk");
            let wv = t.param_named("cross_attention.wv");
            let wo = t.param_named("cross_attention.wo");
            let q = t.matmul(xt, wq);
            let k = t.matmul(tv, wk);
            let v = t.matmul(tv, wv);
            let s = t.matmul_t(q, k);
            let s = t.scale(s, 1.0 / (cfg.attn_dim as f64).sqrt());
            let p = t.softmax_rows(s);
            let ctx = t.matmul(p, v);
            let ctx = t.matmul(ctx, wo);
            let h = t.add(xt, ctx);
            let h = t.tanh(h);
            let bt = t.mean_rows(h);
            let prod = t.hadamard(e_bv, bt);
            let c = t.cosine(e_bv, bt);
            let u = t.concat_cols(&[prod, c]);
            a = Some(linear(t, u, "alignment"));
            e_bt = Some(bt);
            cosine = Some(c);
        }

        let (mut f, mut fusion_input, mut o_s) = (None, None, None);
        if cfg.use_source_branch {
            let fin = match cfg.fusion {
                FusionMode::Identity => e_bv,
                FusionMode::Concat => {
                    let ps = t.input(x.source.clone());
                    let ts = linear(t, ps, self.source_encoder());
                    let ts = t.tanh(ts);
                    let fs = t.mean_rows(ts);
                    f = Some(fs);
                    t.concat_cols(&[fs, e_bv])
                }
                FusionMode::Attention => {
                    let ps = t.input(x.source.clone());
                    let ts = linear(t, ps, self.source_encoder());
                    let ts = t.tanh(ts);
                    f = Some(t.mean_rows(ts));
                    let wq = t.param_named("fusion_attention.wq");
                    let wk = t.param_named("fusion_attention.wk");
                    let wv = t.param_named("fusion_attention.wv");
                    let wo = t.param_named("fusion_attention.wo");
                    let q = t.matmul(tv, wq);
                    let k = t.matmul(ts, wk);
                    let v = t.matmul(ts, wv);
                    let dh = cfg.embed_dim / cfg.fusion_heads;
                    let mut heads = Vec::with_capacity(cfg.fusion_heads);
                    for hd in 0..cfg.fusion_heads {
                        let qh = t.slice_cols(q, hd * dh, dh);
                        let kh = t.slice_cols(k, hd * dh, dh);
                        let vh = t.slice_cols(v, hd * dh, dh);
                        let s = t.matmul_t(qh, kh);
                        let s = t.scale(s, 1.0 / (dh as f64).sqrt());
                        let p = t.softmax_rows(s);
                        heads.push(t.matmul(p, vh));
                    }
                    let mha = t.concat_cols(&heads);
                    let mha = t.matmul(mha, wo);
                    let fused = t.add(tv, mha);
                    t.mean_rows(fused)
                }
            };
            fusion_input = Some(fin);
            o_s = Some(mlp2(t, fin, "source_head"));
        }

        let tq = linear(t, pe, "quality_encoder");
        let tq = t.tanh(tq);
        let g = t.mean_rows(tq);
        let q = mlp2(t, g, "quality_head");

        let parts: Vec<Var> = [a, o_s, Some(q)].into_iter().flatten().collect();
        let head_in = t.concat_cols(&parts);
        let score = mlp2(t, head_in, "head");
        Graph { e_bv, e_bt, cosine, f, fusion_input, o_s, q, head_in, score }
    }

    pub fn predict(&self, x: &CaseFeatures) -> Result<f64, ModelError> {
        self.check_features(x)?;
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        Ok(t.value(g.score).data[0])
    }

    /// Records a forward pass; the returned variable is the `1 x 1` score.
    pub fn record(&self, x: &CaseFeatures) -> Result<(Tape<'_>, Var), ModelError> {
        self.check_features(x)?;
        let mut t = Tape::new(&self.params);
        let score = self.build(&mut t, x).score;
        Ok((t, score))
    }

    /// Adds `seed · ∂score/∂θ` into `grads` and returns the score.
    pub fn accumulate_gradient(&self, x: &CaseFeatures, seed: f64, grads: &mut [Matrix]) -> Result<f64, ModelError> {
        self.check_features(x)?;
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        t.backward(g.score, seed, grads);
        Ok(t.value(g.score).data[0])
    }

    pub fn encode_alignment(&self, x: &CaseFeatures) -> Result<AlignmentFeatures, ModelError> {
        self.check_features(x)?;
        if !self.config.use_text_branch {
            return Err(ModelError::BranchDisabled("text"));
        }
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        Ok(AlignmentFeatures {
            e_bv: t.value(g.e_bv).data.clone(),
            e_bt: t.value(g.e_bt.unwrap()).data.clone(),
        })
    }

    pub fn encode_source_target(&self, x: &CaseFeatures) -> Result<SourceTargetFeatures, ModelError> {
        self.check_features(x)?;
        if !self.config.use_source_branch {
            return Err(ModelError::BranchDisabled("source"));
        }
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        Ok(SourceTargetFeatures {
            f: g.f.map(|v| t.value(v).data.clone()).unwrap_or_default(),
            f_star: t.value(g.e_bv).data.clone(),
            fusion_input: t.value(g.fusion_input.unwrap()).data.clone(),
            o_s: t.value(g.o_s.unwrap()).data.clone(),
        })
    }

    pub fn encode_quality(&self, x: &CaseFeatures) -> Result<QualityFeatures, ModelError> {
        self.check_features(x)?;
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        Ok(QualityFeatures { q: t.value(g.q).data.clone() })
    }

    /// Score plus per-branch sub-scores.
    pub fn predict_with_diagnostics(&self, x: &CaseFeatures) -> Result<(f64, BranchDiagnostics), ModelError> {
        self.check_features(x)?;
        let mut t = Tape::new(&self.params);
        let g = self.build(&mut t, x);
        let z = t.value(g.head_in).data.clone();
        let cfg = &self.config;
        let mut spans = Vec::new();
        let mut off = 0;
        for (on, w) in [(cfg.use_text_branch, cfg.embed_dim), (cfg.use_source_branch, cfg.source_out)] {
            spans.push(on.then_some((off, w)));
            off += if on { w } else { 0 };
        }
        let quality_span = (off, cfg.quality_out);
        let only = |(start, len): (usize, usize)| {
            let mut masked = vec![0.0; z.len()];
            masked[start..start + len].copy_from_slice(&z[start..start + len]);
            self.head_value(&masked)
        };
        let diagnostics = BranchDiagnostics {
            alignment: spans[0].map(only),
            source: spans[1].map(only),
            quality: only(quality_span),
            text_image_cosine: g.cosine.map(|c| t.value(c).data[0]),
        };
        Ok((t.value(g.score).data[0], diagnostics))
    }

    fn head_value(&self, z: &[f64]) -> f64 {
        let mut t = Tape::new(&self.params);
        let x = t.input(Matrix::row_vector(z.to_vec()));
        let s = mlp2(&mut t, x, "head");
        t.value(s).data[0]
    }

    pub fn forward(&self, case: &EditCase, images: &dyn ImageProvider) -> Result<Prediction, ModelError> {
        let x = CaseFeatures::extract(&self.config, case, images)?;
        let (score, diagnostics) = self.predict_with_diagnostics(&x)?;
        if !score.is_finite() {
            return Err(ModelError::Feature(format!("non-finite score for case {}", case.case_id)));
        }
        Ok(Prediction { case_id: case.case_id.clone(), score, diagnostics })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(cfg: &ModelConfig, seed: u64) -> CaseFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.grid * cfg.grid;
        let mut m = || Matrix::from_vec(n, PATCH_FEATURES, (0..n * PATCH_FEATURES).map(|_| rng.gen()).collect());
        let (edited, source) = (m(), m());
        CaseFeatures { edited, source, tokens: vec![1, 3, 3, 7] }
    }

    #[test]
    fn eval_is_deterministic() {
        let m = EditQualityModel::new(ModelConfig::stub(), 3).unwrap();
        let x = random_features(m.config(), 1);
        assert_eq!(m.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
        assert_eq!(m.encode_alignment(&x).unwrap(), m.encode_alignment(&x).unwrap());
    }

    #[test]
    fn feature_shapes() {
        let m = EditQualityModel::new(ModelConfig::stub(), 3).unwrap();
        let x = random_features(m.config(), 1);
        let a = m.encode_alignment(&x).unwrap();
        assert_eq!((a.e_bv.len(), a.e_bt.len()), (4, 4));
        let st = m.encode_source_target(&x).unwrap();
        assert_eq!(st.fusion_input.len(), 8);
        assert_eq!(st.o_s.len(), m.config().source_out);
        assert_eq!(m.encode_quality(&x).unwrap().q.len(), m.config().quality_out);
    }

    #[test]
    fn identical_images_duplicate_concat_input() {
        let m = EditQualityModel::new(ModelConfig::stub(), 3).unwrap();
        let mut x = random_features(m.config(), 1);
        x.source = x.edited.clone();
        let st = m.encode_source_target(&x).unwrap();
        assert_eq!(st.fusion_input[..4], st.fusion_input[4..]);
    }

    #[test]
    fn bad_features_rejected() {
        let m = EditQualityModel::new(ModelConfig::stub(), 3).unwrap();
        let mut x = random_features(m.config(), 1);
        x.tokens = vec![99];
        assert!(matches!(m.predict(&x), Err(ModelError::Feature(_))));
    }

    #[test]
    fn disabled_branch_reported() {
        let cfg = ModelConfig { use_text_branch: false, ..ModelConfig::stub() };
        let m = EditQualityModel::new(cfg, 3).unwrap();
        let x = random_features(m.config(), 1);
        assert!(matches!(m.encode_alignment(&x), Err(ModelError::BranchDisabled("text"))));
        let (_, d) = m.predict_with_diagnostics(&x).unwrap();
        assert!(d.alignment.is_none() && d.text_image_cosine.is_none() && d.source.is_some());
    }
}
