//! Synthetic datasets and rater panels for tests, demos and smoke runs.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CaseSet, DatasetMetadata, EditCase, MemoryImageProvider, MethodInfo, PromptType};
use crate::subjective::{ScoreRow, DEFAULT_DIMS};

const PROMPTS: [(PromptType, &str); 6] = [
    (PromptType::Style, "make it look like a watercolor painting"),
    (PromptType::Style, "turn the colors warm and golden"),
    (PromptType::Semantic, "replace the box with a red ball"),
    (PromptType::Semantic, "add a small bird on the left"),
    (PromptType::Structural, "move the object to the right"),
    (PromptType::Structural, "make the object twice as large"),
];

/// Ground truth behind a synthetic case, one value per default dimension in `[1, 10]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub case_id: String,
    pub quality: [f64; 3],
    pub noise_level: f64,
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub cases: CaseSet,
    pub images: MemoryImageProvider,
    pub truth: Vec<SynthTruth>,
}

fn source_image(rng: &mut ChaCha8Rng, size: u32) -> RgbImage {
    let base: [f64; 3] = [rng.gen_range(40.0..200.0), rng.gen_range(40.0..200.0), rng.gen_range(40.0..200.0)];
    let obj: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let (x0, y0) = (rng.gen_range(0..size / 2), rng.gen_range(0..size / 2));
    let side = rng.gen_range(size / 6..size / 2);
    RgbImage::from_fn(size, size, |x, y| {
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            Rgb(obj)
        } else {
            let t = (x + y) as f64 / (2 * size) as f64;
            Rgb(base.map(|b| (b * (0.7 + 0.6 * t)).clamp(0.0, 255.0) as u8))
        }
    })
}

fn edit_image(src: &RgbImage, rng: &mut ChaCha8Rng, noise_level: f64, drift: f64) -> RgbImage {
    let shift: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    RgbImage::from_fn(src.width(), src.height(), |x, y| {
        let p = src.get_pixel(x, y);
        Rgb(std::array::from_fn(|c| {
            let v = p[c] as f64 + drift * 120.0 * shift[c] + noise_level * rng.gen_range(-80.0..80.0);
            v.clamp(0.0, 255.0) as u8
        }))
    })
}

/// `n` cases of `size x size` images. Edits add noise (hurting quality) and a
/// colour drift (hurting fidelity); prompt fit is random.
pub fn synth_dataset(n: usize, size: u32, seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let methods = MethodInfo::reference_methods();
    let mut images = MemoryImageProvider::default();
    let mut cases = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let case_id = format!("case{i:04}");
        let (prompt_type, prompt) = PROMPTS[rng.gen_range(0..PROMPTS.len())];
        let noise_level: f64 = rng.gen();
        let drift: f64 = rng.gen();
        let fit: f64 = rng.gen();
        let src = source_image(&mut rng, size);
        let edited = edit_image(&src, &mut rng, noise_level, drift);
        let (sref, eref) = (format!("{case_id}_source.png"), format!("{case_id}_edited.png"));
        images.insert(&sref, src);
        images.insert(&eref, edited);
        let text_image = 1.0 + 9.0 * fit;
        let fidelity = 10.0 - 9.0 * drift;
        let overall = 10.0 - 9.0 * (0.6 * noise_level + 0.2 * drift + 0.2 * (1.0 - fit));
        truth.push(SynthTruth { case_id: case_id.clone(), quality: [text_image, fidelity, overall], noise_level, drift });
        cases.push(EditCase {
            case_id,
            source_image: sref,
            edited_image: eref,
            prompt: prompt.to_string(),
            prompt_type,
            editing_method: methods[i % methods.len()].name.clone(),
            content_tags: vec![],
        });
    }
    let meta = DatasetMetadata { name: "synthetic".into(), version: "1".into(), created: "1970-01-01".into() };
    SynthDataset { cases: CaseSet::new(meta, cases).with_methods(methods), images, truth }
}

/// Rounded truth plus noise in {-1, 0, +1} with probabilities (1/4, 1/2, 1/4), clamped to 1..=10.
fn consistent_score(truth: f64, rng: &mut ChaCha8Rng) -> i64 {
    let noise = match rng.gen_range(0..4) {
        0 => -1,
        3 => 1,
        _ => 0,
    };
    (truth.round() as i64 + noise).clamp(1, 10)
}

fn median(sorted: &[i64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Ratings from `n_consistent` raters (`rater00`, ...) plus `n_adversarial`
/// careless raters (`adversary0`, ...) who land two points above or below the
/// panel median, direction chosen by coin flip.
pub fn synth_ratings(truth: &[SynthTruth], n_consistent: usize, n_adversarial: usize, seed: u64) -> Vec<ScoreRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut ts = 1_700_000_000u64;
    for t in truth {
        for (d, dim) in DEFAULT_DIMS.iter().enumerate() {
            let mut panel = Vec::with_capacity(n_consistent);
            for r in 0..n_consistent {
                let score = consistent_score(t.quality[d], &mut rng);
                panel.push(score);
                ts += 1;
                rows.push(ScoreRow {
                    rater_id: format!("rater{r:02}"),
                    case_id: t.case_id.clone(),
                    dim: dim.to_string(),
                    score,
                    timestamp: ts,
                });
            }
            panel.sort_unstable();
            let centre = if panel.is_empty() { t.quality[d] } else { median(&panel) };
            for a in 0..n_adversarial {
                let offset = if rng.gen_bool(0.5) { 2.0 } else { -2.0 };
                ts += 1;
                rows.push(ScoreRow {
                    rater_id: format!("adversary{a}"),
                    case_id: t.case_id.clone(),
                    dim: dim.to_string(),
                    score: ((centre + offset).round() as i64).clamp(1, 10),
                    timestamp: ts,
                });
            }
        }
    }
    rows
}

/// Integer truth uniform in 1..=10 for every (case, dim); used for screening studies.
pub fn uniform_truth(n_cases: usize, seed: u64) -> Vec<SynthTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_cases)
        .map(|i| SynthTruth {
            case_id: format!("case{i:04}"),
            quality: std::array::from_fn(|_| rng.gen_range(1..=10) as f64),
            noise_level: 0.0,
            drift: 0.0,
        })
        .collect()
}
