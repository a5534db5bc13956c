//! Backend for the subjective study: per-rater sessions over the whole case set,
//! server-clocked minimum dwell, mandatory breaks, an append-only journal and
//! export into the score-table format read by [`crate::subjective`].
//!
//! Timing rules, all measured on the injected [`Clock`]:
//! - a rating is accepted only [`MIN_DWELL_MS`] or more after its case was served;
//! - once [`WORK_BLOCK_MS`] of active rating time (serve to submit) has built up
//!   since the last break, the next request starts a [`BREAK_MS`] break.

mod api;
mod clock;
mod journal;
mod service;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subjective::{DEFAULT_DIMS, SCORE_MAX, SCORE_MIN};

pub use api::{handle_request, ApiResponse};
pub use clock::{Clock, ManualClock, SystemClock};
pub use journal::{read_journal, Journal, JournalEvent};
pub use service::RatingService;

pub const MIN_DWELL_MS: u64 = 5_000;
pub const WORK_BLOCK_MS: u64 = 15 * 60 * 1000;
pub const BREAK_MS: u64 = 5 * 60 * 1000;

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("rater {0} is not registered")]
    UnknownRater(String),
    #[error("rater {0} already has a session")]
    DuplicateSession(String),
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("session {0} is done")]
    SessionDone(String),
    #[error("on break until {break_until}")]
    OnBreak { break_until: u64 },
    #[error("no case has been served; request the next sample first")]
    NothingServed,
    #[error("served case is {expected}, submission is for {got}")]
    CaseMismatch { expected: String, got: String },
    #[error("submitted {elapsed_ms} ms after serve; retry in {retry_after_ms} ms")]
    TooEarly { elapsed_ms: u64, retry_after_ms: u64 },
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("rater {rater_id} already rated {case_id}")]
    DuplicateRating { rater_id: String, case_id: String },
    #[error("no ratings recorded")]
    NoRatings,
    #[error("invalid setup: {0}")]
    Config(String),
    #[error("journal {path}: {source}")]
    Journal {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("journal line {line}: {message}")]
    JournalCorrupt { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Rating,
    OnBreak,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingCase {
    pub case_id: String,
    pub served_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterSession {
    pub session_id: String,
    pub rater_id: String,
    pub seed: u64,
    /// Case ids in presentation order; a permutation of the whole case set.
    pub order: Vec<String>,
    pub cursor: usize,
    /// Total serve-to-submit time over all accepted ratings.
    pub active_ms: u64,
    pub active_since_break_ms: u64,
    pub state: SessionState,
    pub break_until: Option<u64>,
    pub breaks_taken: usize,
    pub pending: Option<PendingCase>,
    pub records: Vec<RatingRecord>,
}

impl RaterSession {
    pub fn total(&self) -> usize {
        self.order.len()
    }
}

/// One accepted rating. `dwell_ms` is server-measured; `client_dwell_ms` is kept for audit only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub rater_id: String,
    pub case_id: String,
    pub scores: BTreeMap<String, u8>,
    pub dwell_ms: u64,
    #[serde(default)]
    pub client_dwell_ms: Option<u64>,
    pub served_at: u64,
    pub submitted_at: u64,
}

/// Client body for `POST /sessions/{id}/ratings`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingSubmission {
    pub case_id: String,
    pub scores: BTreeMap<String, i64>,
    #[serde(default)]
    pub client_dwell_ms: Option<u64>,
}

/// Requires exactly the three default dimensions, each within the score range.
pub fn validate_scores(scores: &BTreeMap<String, i64>) -> Result<BTreeMap<String, u8>, RatingError> {
    let mut out = BTreeMap::new();
    for (dim, &score) in scores {
        if !DEFAULT_DIMS.contains(&dim.as_str()) {
            return Err(RatingError::InvalidScores(format!("unknown dimension {dim}")));
        }
        if score < SCORE_MIN as i64 || score > SCORE_MAX as i64 {
            return Err(RatingError::InvalidScores(format!(
                "{dim} = {score} outside {SCORE_MIN}..={SCORE_MAX}"
            )));
        }
        out.insert(dim.clone(), score as u8);
    }
    if let Some(missing) = DEFAULT_DIMS.iter().find(|d| !out.contains_key(**d)) {
        return Err(RatingError::InvalidScores(format!("missing dimension {missing}")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingOption {
    pub dim: String,
    pub label: String,
    pub min: u8,
    pub max: u8,
}

pub fn rating_options() -> Vec<RatingOption> {
    let labels = ["Text-image consistency", "Source-target fidelity", "Overall quality"];
    DEFAULT_DIMS
        .iter()
        .zip(labels)
        .map(|(d, l)| RatingOption { dim: d.to_string(), label: l.to_string(), min: SCORE_MIN, max: SCORE_MAX })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasePayload {
    pub session_id: String,
    pub case_id: String,
    /// 1-based position in the rater's order.
    pub position: usize,
    pub total: usize,
    pub source_image_url: String,
    pub edited_image_url: String,
    pub instruction: String,
    pub options: Vec<RatingOption>,
    pub served_at: u64,
    pub submit_not_before: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextSample {
    Case(CasePayload),
    Break { break_until: u64, remaining_ms: u64 },
    Done { completed: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingAck {
    pub case_id: String,
    pub cursor: usize,
    pub total: usize,
    pub dwell_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub rater_id: String,
    pub cursor: usize,
    pub total: usize,
    pub state: SessionState,
    pub break_until: Option<u64>,
}

impl From<&RaterSession> for SessionView {
    fn from(s: &RaterSession) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            rater_id: s.rater_id.clone(),
            cursor: s.cursor,
            total: s.total(),
            state: s.state,
            break_until: s.break_until,
        }
    }
}
