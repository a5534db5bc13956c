//! Agreement metrics (SROCC/PLCC/KRCC/RMSE), pixel metrics (MSE/PSNR/SSIM) and
//! pluggable embedding scorers used as baselines.

mod baselines;
mod correlation;
mod embedding;
mod pixel;

use thiserror::Error;

pub use baselines::{run_baselines, BaselineReport, BaselineRow, ScoreDumpRow, ScorerFailure};
pub use correlation::{
    average_ranks, correlation_summary, krcc, plcc, rmse, srocc, CorrelationSummary, PairedSeries,
};
pub use embedding::{
    cosine, embedding_cosine, text_image_cosine, ColorHistogramEncoder, ColorTermEncoder, EmbeddingScorer,
    ImageEncoder, PixelMetric, PixelScorer, ScoreInput, Scorer, ScorerHandle, ScorerKind, ScorerRegistry,
    TextEncoder, TextImageScorer,
};
pub use pixel::{luma, mse_image, psnr, psnr_from_mse, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: pred has {pred} values, target has {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("{0} series is constant; correlation undefined")]
    Constant(&'static str),
    #[error("all pairs tied in {0} series")]
    AllTied(&'static str),
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: u32, height: u32, window: u32 },
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("embedding dimensions differ: {0} vs {1}")]
    EmbeddingDim(usize, usize),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("scorer backend unavailable: {0}")]
    Backend(String),
    #[error("scorer {name} expects kind {expected}")]
    WrongKind { name: String, expected: &'static str },
    #[error("unknown scorer {0}")]
    UnknownScorer(String),
    #[error("duplicate scorer name {0}")]
    DuplicateScorer(String),
}
