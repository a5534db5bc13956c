//! Transport-neutral request dispatch. HTTP adapters pass method, path and body
//! through and copy the response out.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{RatingError, RatingService, RatingSubmission};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
    /// Whole seconds, for a `Retry-After` header.
    pub retry_after_s: Option<u64>,
}

impl ApiResponse {
    fn json(status: u16, value: impl Serialize) -> Self {
        let body = serde_json::to_vec(&value).expect("response serializes");
        ApiResponse { status, content_type: "application/json", body, retry_after_s: None }
    }

    fn error(status: u16, code: &str, message: impl std::fmt::Display) -> Self {
        Self::json(status, json!({ "error": code, "message": message.to_string() }))
    }

    pub fn body_json(&self) -> Option<serde_json::Value> {
        serde_json::from_slice(&self.body).ok()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    rater_id: String,
    #[serde(default)]
    seed: u64,
}

fn from_error(e: RatingError) -> ApiResponse {
    use RatingError::*;
    match e {
        UnknownRater(_) => ApiResponse::error(403, "unknown_rater", &e),
        DuplicateSession(_) => ApiResponse::error(409, "duplicate_session", &e),
        UnknownSession(_) => ApiResponse::error(404, "unknown_session", &e),
        SessionDone(_) => ApiResponse::error(409, "session_done", &e),
        OnBreak { break_until } => ApiResponse::json(
            409,
            json!({ "error": "on_break", "message": e.to_string(), "break_until": break_until }),
        ),
        NothingServed => ApiResponse::error(409, "nothing_served", &e),
        CaseMismatch { .. } => ApiResponse::error(409, "case_mismatch", &e),
        TooEarly { elapsed_ms, retry_after_ms } => {
            let mut r = ApiResponse::json(
                425,
                json!({
                    "error": "too_early",
                    "message": e.to_string(),
                    "elapsed_ms": elapsed_ms,
                    "retry_after_ms": retry_after_ms,
                }),
            );
            r.retry_after_s = Some(retry_after_ms.div_ceil(1000));
            r
        }
        InvalidScores(_) => ApiResponse::error(422, "invalid_scores", &e),
        DuplicateRating { .. } => ApiResponse::error(409, "duplicate_rating", &e),
        NoRatings => ApiResponse::error(404, "no_ratings", &e),
        Config(_) | Journal { .. } | JournalCorrupt { .. } => {
            log::error!("rating service failure: {e}");
            ApiResponse::error(500, "internal", &e)
        }
    }
}

fn image_content_type(reference: &str) -> &'static str {
    let lower = reference.to_ascii_lowercase();
    if lower.ends_with(".png") {
        "image/png"
    } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

fn serve_image(service: &RatingService, reference: &str) -> ApiResponse {
    let (Some(root), true) = (service.image_root(), service.is_case_image(reference)) else {
        return ApiResponse::error(404, "not_found", format!("no image {reference}"));
    };
    let safe = std::path::Path::new(reference)
        .components()
        .all(|c| matches!(c, std::path::Component::Normal(_)));
    if !safe {
        return ApiResponse::error(404, "not_found", format!("no image {reference}"));
    }
    match std::fs::read(root.join(reference)) {
        Ok(body) => ApiResponse { status: 200, content_type: image_content_type(reference), body, retry_after_s: None },
        Err(e) => ApiResponse::error(404, "not_found", format!("{reference}: {e}")),
    }
}

/// Routes:
/// - `POST /sessions` with `{"rater_id", "seed"?}`
/// - `GET /sessions/{id}` and `GET /sessions/{id}/next`
/// - `POST /sessions/{id}/ratings` with a [`RatingSubmission`]
/// - `GET /export` (score table CSV)
/// - `GET /images/{reference}` when the case set has an image root
pub fn handle_request(service: &RatingService, method: &str, path: &str, body: &[u8]) -> ApiResponse {
    let path = path.split('?').next().unwrap_or("");
    let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
    match (method, segments.as_slice()) {
        ("POST", ["sessions"]) => match serde_json::from_slice::<CreateSession>(body) {
            Ok(req) => match service.create_session(&req.rater_id, req.seed) {
                Ok(view) => ApiResponse::json(201, view),
                Err(e) => from_error(e),
            },
            Err(e) => ApiResponse::error(400, "bad_request", e),
        },
        ("GET", ["sessions", id]) => match service.session(id) {
            Ok(s) => ApiResponse::json(200, super::SessionView::from(&s)),
            Err(e) => from_error(e),
        },
        ("GET", ["sessions", id, "next"]) => match service.next_sample(id) {
            Ok(next) => ApiResponse::json(200, next),
            Err(e) => from_error(e),
        },
        ("POST", ["sessions", id, "ratings"]) => match serde_json::from_slice::<RatingSubmission>(body) {
            Ok(sub) => match service.submit_rating(id, sub) {
                Ok(ack) => ApiResponse::json(200, ack),
                Err(e) => from_error(e),
            },
            Err(e) => ApiResponse::error(400, "bad_request", e),
        },
        ("GET", ["export"]) => match service.export_csv() {
            Ok(body) => ApiResponse { status: 200, content_type: "text/csv", body, retry_after_s: None },
            Err(e) => from_error(e),
        },
        ("GET", ["images", rest @ ..]) if !rest.is_empty() => serve_image(service, &rest.join("/")),
        (_, ["sessions"] | ["sessions", _] | ["sessions", _, "next" | "ratings"] | ["export"]) => {
            ApiResponse::error(405, "method_not_allowed", format!("{method} {path}"))
        }
        _ => ApiResponse::error(404, "not_found", format!("{method} {path}")),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::rating::ManualClock;
    use crate::subjective::DEFAULT_DIMS;
    use crate::synth::synth_dataset;

    fn setup() -> (RatingService, ManualClock) {
        let clock = ManualClock::new(0);
        let ds = synth_dataset(2, 16, 3);
        (RatingService::new(&ds.cases, ["ana"], Arc::new(clock.clone())).unwrap(), clock)
    }

    fn rating_body(case_id: &str, v: i64) -> Vec<u8> {
        let scores: serde_json::Map<String, serde_json::Value> =
            DEFAULT_DIMS.iter().map(|d| (d.to_string(), json!(v))).collect();
        serde_json::to_vec(&json!({ "case_id": case_id, "scores": scores })).unwrap()
    }

    #[test]
    fn scripted_flow_through_dispatch() {
        let (svc, clock) = setup();
        assert_eq!(handle_request(&svc, "GET", "/export", b"").status, 404);
        let r = handle_request(&svc, "POST", "/sessions", br#"{"rater_id":"ana","seed":4}"#);
        assert_eq!(r.status, 201);
        let id = r.body_json().unwrap()["session_id"].as_str().unwrap().to_string();
        assert_eq!(handle_request(&svc, "POST", "/sessions", br#"{"rater_id":"ana"}"#).status, 409);
        assert_eq!(handle_request(&svc, "POST", "/sessions", br#"{"rater_id":"zed"}"#).status, 403);
        assert_eq!(handle_request(&svc, "POST", "/sessions", b"{").status, 400);

        let next = handle_request(&svc, "GET", &format!("/sessions/{id}/next"), b"").body_json().unwrap();
        assert_eq!(next["kind"], "case");
        assert!(next["source_image_url"].as_str().unwrap().starts_with("/images/"));
        let case_id = next["case_id"].as_str().unwrap().to_string();

        clock.advance(4_200);
        let early = handle_request(&svc, "POST", &format!("/sessions/{id}/ratings"), &rating_body(&case_id, 6));
        assert_eq!((early.status, early.retry_after_s), (425, Some(1)));
        assert_eq!(early.body_json().unwrap()["retry_after_ms"], 800);

        clock.advance(800);
        let bad = handle_request(&svc, "POST", &format!("/sessions/{id}/ratings"), &rating_body(&case_id, 0));
        assert_eq!(bad.status, 422);
        let ok = handle_request(&svc, "POST", &format!("/sessions/{id}/ratings"), &rating_body(&case_id, 6));
        assert_eq!(ok.status, 200);
        assert_eq!(ok.body_json().unwrap()["cursor"], 1);

        let export = handle_request(&svc, "GET", "/export?x=1", b"");
        assert_eq!((export.status, export.content_type), (200, "text/csv"));
        assert_eq!(String::from_utf8(export.body).unwrap().lines().count(), 1 + 3);
        assert_eq!(handle_request(&svc, "GET", "/sessions/s9999/next", b"").status, 404);
        assert_eq!(handle_request(&svc, "DELETE", "/export", b"").status, 405);
        assert_eq!(handle_request(&svc, "GET", "/images/case0000_source.png", b"").status, 404);
    }

    #[test]
    fn images_are_served_from_root_only_for_case_refs() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(1, 16, 3);
        let case = ds.cases.cases()[0].clone();
        std::fs::write(dir.path().join(&case.source_image), b"\x89PNGfake").unwrap();
        std::fs::write(dir.path().join("secret.txt"), b"no").unwrap();
        let cases = ds.cases.clone().with_root(dir.path());
        let svc = RatingService::new(&cases, ["ana"], Arc::new(ManualClock::new(0))).unwrap();
        let r = handle_request(&svc, "GET", &format!("/images/{}", case.source_image), b"");
        assert_eq!((r.status, r.content_type, r.body.as_slice()), (200, "image/png", &b"\x89PNGfake"[..]));
        assert_eq!(handle_request(&svc, "GET", "/images/secret.txt", b"").status, 404);
        assert_eq!(handle_request(&svc, "GET", "/images/../secret.txt", b"").status, 404);
    }
}
