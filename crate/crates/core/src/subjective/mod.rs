//! Raw ratings → screened, normalised mean opinion scores.
//!
//! The pipeline is `ScoreMatrix` → [`zscore_normalize`] → [`bt500_screen`] →
//! [`aggregate_mos`], with every dimension processed independently.

mod bt500;
mod matrix;
mod mos;
mod zscore;

use thiserror::Error;

pub use bt500::{bt500_screen, ObserverStats, ScreeningReport, REJECT_ASYMMETRY, REJECT_FRACTION};
pub use matrix::{
    parse_score_rows, read_score_rows, write_score_rows, ScoreMatrix, ScoreRow, DEFAULT_DIMS,
    DIM_OVERALL, DIM_SOURCE_TARGET, DIM_TEXT_IMAGE, SCORE_MAX, SCORE_MIN,
};
pub use mos::{
    aggregate_mos, parse_mos_rows, read_mos_table, rescale_mos, AffineMap, MosCell, MosRow, MosTable,
};
pub use zscore::{standardize, zscore_normalize, RaterStats, ZScoreMatrix};

#[derive(Debug, Error)]
pub enum SubjectiveError {
    #[error("score {score} for rater {rater_id}, case {case_id}, dim {dim} is outside [1,10]")]
    ScoreOutOfRange { rater_id: String, case_id: String, dim: String, score: i64 },
    #[error("duplicate score for rater {rater_id}, case {case_id}, dim {dim}")]
    DuplicateEntry { rater_id: String, case_id: String, dim: String },
    #[error("duplicate {axis} id {id}")]
    DuplicateId { axis: &'static str, id: String },
    #[error("rater {rater_id} has {n} score(s) on {dim}; at least 2 are required")]
    InsufficientScores { rater_id: String, dim: String, n: usize },
    #[error("screening needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("no raters kept")]
    NoKeptRaters,
    #[error("unknown rater {0}")]
    UnknownRater(String),
    #[error("unknown dimension {0}")]
    UnknownDim(String),
    #[error("rescale range [{lo}, {hi}] is empty")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("MOS column {0} is constant; cannot rescale")]
    ConstantColumn(String),
    #[error("table row {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for SubjectiveError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        SubjectiveError::Parse { line, message: e.to_string() }
    }
}
