use image::RgbImage;

use super::config::{ModelConfig, PATCH_FEATURES};
use super::params::fnv1a;
use super::tensor::Matrix;
use super::ModelError;
use crate::dataset::{EditCase, ImageProvider};

/// Model inputs for one case, precomputed from images and prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFeatures {
    /// `grid² x PATCH_FEATURES`
    pub edited: Matrix,
    pub source: Matrix,
    pub tokens: Vec<usize>,
}

impl CaseFeatures {
    pub fn extract(cfg: &ModelConfig, case: &EditCase, images: &dyn ImageProvider) -> Result<Self, ModelError> {
        let decode = |r: &str| images.load(r).map_err(|e| ModelError::Decode(format!("{r}: {e}")));
        let source = decode(&case.source_image)?;
        let edited = decode(&case.edited_image)?;
        Self::from_images(cfg, &source, &edited, &case.prompt)
    }

    pub fn from_images(
        cfg: &ModelConfig,
        source: &RgbImage,
        edited: &RgbImage,
        prompt: &str,
    ) -> Result<Self, ModelError> {
        Ok(CaseFeatures {
            edited: patch_features(edited, cfg.grid)?,
            source: patch_features(source, cfg.grid)?,
            tokens: tokenize(prompt, cfg.vocab_size, cfg.max_tokens),
        })
    }
}

/// One row per grid cell (row-major), values in `[0, 1]`-ish units.
pub fn patch_features(img: &RgbImage, grid: usize) -> Result<Matrix, ModelError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < grid || h < grid {
        return Err(ModelError::ImageTooSmall { width: w as u32, height: h as u32, grid });
    }
    let luma: Vec<f64> = img
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    let mut out = Matrix::zeros(grid * grid, PATCH_FEATURES);
    for gy in 0..grid {
        let (y0, y1) = (gy * h / grid, (gy + 1) * h / grid);
        for gx in 0..grid {
            let (x0, x1) = (gx * w / grid, (gx + 1) * w / grid);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let mut rgb = [0.0; 3];
            let (mut s, mut ss, mut grad) = (0.0, 0.0, 0.0);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get_pixel(x as u32, y as u32);
                    for c in 0..3 {
                        rgb[c] += p[c] as f64 / 255.0;
                    }
                    let l = luma[y * w + x];
                    s += l;
                    ss += l * l;
                    let dx = if x + 1 < w { luma[y * w + x + 1] - l } else { 0.0 };
                    let dy = if y + 1 < h { luma[(y + 1) * w + x] - l } else { 0.0 };
                    grad += (dx * dx + dy * dy).sqrt();
                }
            }
            let mean = s / n;
            let row = gy * grid + gx;
            for c in 0..3 {
                *out.at_mut(row, c) = rgb[c] / n;
            }
            *out.at_mut(row, 3) = (ss / n - mean * mean).max(0.0).sqrt();
            *out.at_mut(row, 4) = grad / n;
        }
    }
    Ok(out)
}

/// Lowercased alphanumeric words hashed into `1..vocab`; bucket 0 stands for an
/// empty prompt. Keeps the first `max_tokens` words.
pub fn tokenize(prompt: &str, vocab: usize, max_tokens: usize) -> Vec<usize> {
    let lower = prompt.to_lowercase();
    let mut ids: Vec<usize> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| 1 + (fnv1a(w.as_bytes()) % (vocab as u64 - 1)) as usize)
        .collect();
    if ids.len() > max_tokens {
        log::info!("prompt truncated from {} to {max_tokens} tokens", ids.len());
        ids.truncate(max_tokens);
    }
    if ids.is_empty() {
        ids.push(0);
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn flat_image_features() {
        let img = RgbImage::from_pixel(8, 6, Rgb([255, 0, 51]));
        let f = patch_features(&img, 2).unwrap();
        assert_eq!(f.shape(), (4, PATCH_FEATURES));
        for r in 0..4 {
            assert!((f.at(r, 0) - 1.0).abs() < 1e-12);
            assert_eq!(f.at(r, 1), 0.0);
            assert!((f.at(r, 2) - 0.2).abs() < 1e-12);
            assert!(f.at(r, 3).abs() < 1e-7);
            assert_eq!(f.at(r, 4), 0.0);
        }
        assert!(patch_features(&RgbImage::new(1, 5), 2).is_err());
    }

    #[test]
    fn tokenizer_contract() {
        let a = tokenize("Make the SKY red!", 16, 8);
        assert_eq!(a, tokenize("make the sky red", 16, 8));
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|&t| (1..16).contains(&t)));
        assert_eq!(tokenize("?!", 16, 8), vec![0]);
        let long = tokenize("a b c d e f g h i j", 16, 3);
        assert_eq!(long, tokenize("a b c", 16, 3));
    }
}
