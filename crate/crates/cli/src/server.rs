//! axum adapter over the transport-neutral rating API.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::Response;
use axum::Router;
use editscore_core::rating::{handle_request, RatingService};

/// Every route goes through [`handle_request`]; the service does its own routing.
pub fn router(service: Arc<RatingService>) -> Router {
    Router::new().fallback(dispatch).with_state(service)
}

async fn dispatch(State(service): State<Arc<RatingService>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    let outcome =
        tokio::task::spawn_blocking(move || handle_request(&service, method.as_str(), &path, &body)).await;
    let api = match outcome {
        Ok(api) => api,
        Err(e) => {
            log::error!("rating handler panicked: {e}");
            return Response::builder()
                .status(StatusCode::INTERNAL_SERVER_ERROR)
                .body(Body::from("internal error"))
                .expect("static response");
        }
    };
    let mut builder = Response::builder()
        .status(StatusCode::from_u16(api.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR))
        .header(header::CONTENT_TYPE, api.content_type);
    if let Some(secs) = api.retry_after_s {
        builder = builder.header(header::RETRY_AFTER, secs.to_string());
    }
    builder.body(Body::from(api.body)).expect("valid response parts")
}

pub async fn serve(service: Arc<RatingService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}

#[cfg(test)]
mod tests {
    use axum::http::Request;
    use editscore_core::rating::ManualClock;
    use editscore_core::subjective::DEFAULT_DIMS;
    use editscore_core::synth::synth_dataset;
    use http_body_util::BodyExt;
    use serde_json::{json, Value};
    use tower::ServiceExt;

    use super::*;

    async fn call(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Option<String>, Value) {
        let body = if body.is_null() { Body::empty() } else { Body::from(body.to_string()) };
        let req = Request::builder().method(method).uri(uri).body(body).unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let retry = resp.headers().get(header::RETRY_AFTER).map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, retry, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    fn rating(case_id: &str, v: i64) -> Value {
        let scores: serde_json::Map<String, Value> = DEFAULT_DIMS.iter().map(|d| (d.to_string(), json!(v))).collect();
        json!({ "case_id": case_id, "scores": scores, "client_dwell_ms": 5000 })
    }

    #[tokio::test]
    async fn early_post_is_rejected_with_retry_after() {
        let clock = ManualClock::new(0);
        let ds = synth_dataset(2, 16, 1);
        let svc = RatingService::new(&ds.cases, ["ana"], Arc::new(clock.clone())).unwrap();
        let app = router(Arc::new(svc));

        let (status, _, v) = call(&app, "POST", "/sessions", json!({ "rater_id": "ana", "seed": 1 })).await;
        assert_eq!(status, StatusCode::CREATED);
        let id = v["session_id"].as_str().unwrap().to_string();
        let (_, _, next) = call(&app, "GET", &format!("/sessions/{id}/next"), Value::Null).await;
        let case_id = next["case_id"].as_str().unwrap().to_string();

        clock.advance(1_500);
        let (status, retry, v) = call(&app, "POST", &format!("/sessions/{id}/ratings"), rating(&case_id, 7)).await;
        assert_eq!(status.as_u16(), 425);
        assert_eq!(retry.as_deref(), Some("4"));
        assert_eq!(v["error"], "too_early");

        clock.advance(3_500);
        let (status, _, v) = call(&app, "POST", &format!("/sessions/{id}/ratings"), rating(&case_id, 7)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["cursor"], 1);
        let (status, _, _) = call(&app, "GET", "/nowhere", Value::Null).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }
}
