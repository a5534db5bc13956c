//! Pluggable scorers.
//!
//! Pretrained encoders (CLIP, DINO, ...) plug in through [`ImageEncoder`] and
//! [`TextEncoder`]; the built-in encoders here are deterministic hand-crafted
//! descriptors so the harness runs without model weights.

use std::collections::BTreeMap;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{mse_image, psnr, ssim, MetricError};
use crate::dataset::EditCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    FullReference,
    NoReference,
    TextImage,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::FullReference => "full_reference",
            ScorerKind::NoReference => "no_reference",
            ScorerKind::TextImage => "text_image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerHandle {
    pub name: String,
    pub kind: ScorerKind,
    /// Identifier of the encoder or metric implementation behind the scorer.
    pub backend: String,
}

impl ScorerHandle {
    pub fn new(name: &str, kind: ScorerKind, backend: &str) -> Self {
        ScorerHandle { name: name.into(), kind, backend: backend.into() }
    }
}

pub trait ImageEncoder: Send + Sync {
    fn encode_image(&self, img: &RgbImage) -> Result<Vec<f64>, MetricError>;
}

pub trait TextEncoder: Send + Sync {
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, MetricError>;
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::EmbeddingDim(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(MetricError::ZeroEmbedding);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity of two images' embeddings (CLIP-V / DINO style).
pub fn embedding_cosine(encoder: &dyn ImageEncoder, a: &RgbImage, b: &RgbImage) -> Result<f64, MetricError> {
    cosine(&encoder.encode_image(a)?, &encoder.encode_image(b)?)
}

/// Cosine similarity of an image embedding and a prompt embedding (CLIP-T style).
pub fn text_image_cosine<E>(encoder: &E, img: &RgbImage, prompt: &str) -> Result<f64, MetricError>
where
    E: ImageEncoder + TextEncoder + ?Sized,
{
    if prompt.trim().is_empty() {
        return Err(MetricError::EmptyPrompt);
    }
    cosine(&encoder.encode_image(img)?, &encoder.encode_text(prompt)?)
}

/// Joint 4×4×4 RGB histogram, L1-normalised.
#[derive(Debug, Clone, Copy, Default)]
pub struct ColorHistogramEncoder;

impl ImageEncoder for ColorHistogramEncoder {
    fn encode_image(&self, img: &RgbImage) -> Result<Vec<f64>, MetricError> {
        let mut h = vec![0.0; 64];
        for p in img.pixels() {
            let bin = (p[0] as usize >> 6) * 16 + (p[1] as usize >> 6) * 4 + (p[2] as usize >> 6);
            h[bin] += 1.0;
        }
        let n = (img.width() * img.height()).max(1) as f64;
        h.iter_mut().for_each(|v| *v /= n);
        Ok(h)
    }
}

/// Maps images and prompts into a shared space of basic colour terms.
///
/// An image's embedding is the share of pixels nearest each term's prototype;
/// a prompt's embedding counts the terms it mentions (plus a small uniform floor
/// so colour-free prompts still have a direction).
#[derive(Debug, Clone, Copy, Default)]
pub struct ColorTermEncoder;

const COLOR_TERMS: [(&str, [f64; 3]); 11] = [
    ("black", [0.0, 0.0, 0.0]),
    ("white", [255.0, 255.0, 255.0]),
    ("gray", [128.0, 128.0, 128.0]),
    ("red", [220.0, 30.0, 30.0]),
    ("green", [40.0, 170.0, 60.0]),
    ("blue", [40.0, 70.0, 210.0]),
    ("yellow", [240.0, 220.0, 40.0]),
    ("orange", [245.0, 140.0, 30.0]),
    ("purple", [130.0, 50.0, 160.0]),
    ("pink", [245.0, 160.0, 190.0]),
    ("brown", [120.0, 75.0, 40.0]),
];

impl ImageEncoder for ColorTermEncoder {
    fn encode_image(&self, img: &RgbImage) -> Result<Vec<f64>, MetricError> {
        let mut h = vec![0.0; COLOR_TERMS.len()];
        for p in img.pixels() {
            let px = [p[0] as f64, p[1] as f64, p[2] as f64];
            let best = COLOR_TERMS
                .iter()
                .enumerate()
                .map(|(i, (_, c))| (i, (0..3).map(|k| (px[k] - c[k]).powi(2)).sum::<f64>()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            h[best] += 1.0;
        }
        Ok(h)
    }
}

impl TextEncoder for ColorTermEncoder {
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        if text.trim().is_empty() {
            return Err(MetricError::EmptyPrompt);
        }
        let mut v = vec![0.05; COLOR_TERMS.len()];
        for word in text.split(|c: char| !c.is_alphanumeric()).map(str::to_lowercase) {
            let word = if word == "grey" { "gray".to_string() } else { word };
            if let Some(i) = COLOR_TERMS.iter().position(|(t, _)| *t == word) {
                v[i] += 1.0;
            }
        }
        Ok(v)
    }
}

/// The images and prompt a scorer sees for one case.
pub struct ScoreInput<'a> {
    pub case: &'a EditCase,
    pub source: &'a RgbImage,
    pub edited: &'a RgbImage,
}

pub trait Scorer: Send + Sync {
    fn handle(&self) -> &ScorerHandle;
    fn score(&self, input: &ScoreInput<'_>) -> Result<f64, MetricError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelMetric {
    Psnr,
    Mse,
    Ssim,
}

/// Full-reference pixel metric between source and edited image.
///
/// When the two differ in size the edited image is brought to the source's size
/// first (same bicubic filter as ingest), since edits may change aspect slightly.
pub struct PixelScorer {
    handle: ScorerHandle,
    metric: PixelMetric,
}

impl PixelScorer {
    pub fn new(metric: PixelMetric) -> Self {
        let name = match metric {
            PixelMetric::Psnr => "psnr",
            PixelMetric::Mse => "mse",
            PixelMetric::Ssim => "ssim",
        };
        PixelScorer { handle: ScorerHandle::new(name, ScorerKind::FullReference, name), metric }
    }
}

impl Scorer for PixelScorer {
    fn handle(&self) -> &ScorerHandle {
        &self.handle
    }

    fn score(&self, input: &ScoreInput<'_>) -> Result<f64, MetricError> {
        let aligned;
        let edited = if input.edited.dimensions() != input.source.dimensions() {
            let (w, h) = input.source.dimensions();
            aligned = image::imageops::resize(input.edited, w, h, image::imageops::FilterType::CatmullRom);
            &aligned
        } else {
            input.edited
        };
        match self.metric {
            PixelMetric::Psnr => psnr(input.source, edited),
            PixelMetric::Mse => mse_image(input.source, edited),
            PixelMetric::Ssim => ssim(input.source, edited),
        }
    }
}

/// Source-vs-edited embedding cosine.
pub struct EmbeddingScorer {
    handle: ScorerHandle,
    encoder: Arc<dyn ImageEncoder>,
}

impl EmbeddingScorer {
    pub fn new(name: &str, backend: &str, encoder: Arc<dyn ImageEncoder>) -> Self {
        EmbeddingScorer { handle: ScorerHandle::new(name, ScorerKind::FullReference, backend), encoder }
    }
}

impl Scorer for EmbeddingScorer {
    fn handle(&self) -> &ScorerHandle {
        &self.handle
    }

    fn score(&self, input: &ScoreInput<'_>) -> Result<f64, MetricError> {
        embedding_cosine(self.encoder.as_ref(), input.source, input.edited)
    }
}

pub trait JointEncoder: ImageEncoder + TextEncoder {}
impl<T: ImageEncoder + TextEncoder> JointEncoder for T {}

/// Edited-image-vs-prompt embedding cosine.
pub struct TextImageScorer {
    handle: ScorerHandle,
    encoder: Arc<dyn JointEncoder>,
}

impl TextImageScorer {
    pub fn new<E: ImageEncoder + TextEncoder + 'static>(name: &str, backend: &str, encoder: E) -> Self {
        TextImageScorer { handle: ScorerHandle::new(name, ScorerKind::TextImage, backend), encoder: Arc::new(encoder) }
    }
}

impl Scorer for TextImageScorer {
    fn handle(&self) -> &ScorerHandle {
        &self.handle
    }

    fn score(&self, input: &ScoreInput<'_>) -> Result<f64, MetricError> {
        text_image_cosine(self.encoder.as_ref(), input.edited, &input.case.prompt)
    }
}

/// Name-unique collection of scorers.
#[derive(Default, Clone)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn Scorer>>,
}

impl ScorerRegistry {
    /// psnr, mse, ssim, hist-cosine (image-image) and color-terms (text-image).
    pub fn builtin() -> Self {
        let mut r = ScorerRegistry::default();
        for m in [PixelMetric::Psnr, PixelMetric::Mse, PixelMetric::Ssim] {
            r.register(Arc::new(PixelScorer::new(m))).expect("unique");
        }
        r.register(Arc::new(EmbeddingScorer::new("hist-cosine", "rgb-histogram-64", Arc::new(ColorHistogramEncoder))))
            .expect("unique");
        r.register(Arc::new(TextImageScorer::new("color-terms", "color-terms-11", ColorTermEncoder)))
            .expect("unique");
        r
    }

    pub fn register(&mut self, scorer: Arc<dyn Scorer>) -> Result<(), MetricError> {
        let name = scorer.handle().name.clone();
        if self.scorers.contains_key(&name) {
            return Err(MetricError::DuplicateScorer(name));
        }
        self.scorers.insert(name, scorer);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scorer>, MetricError> {
        self.scorers.get(name).cloned().ok_or_else(|| MetricError::UnknownScorer(name.to_string()))
    }

    /// Resolves names in order; the first unknown name is an error.
    pub fn select(&self, names: &[&str]) -> Result<Vec<Arc<dyn Scorer>>, MetricError> {
        names.iter().map(|n| self.get(n)).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.scorers.keys().map(String::as_str).collect()
    }
}
