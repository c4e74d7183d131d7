mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;
use tracevis::server::{router, ApiState, MetaResponse, Neighbor};
use tracevis_core::landscape::{SampleRecord, TrajectoryPoint};

async fn get(state: &Arc<ApiState>, uri: &str) -> (StatusCode, Vec<u8>) {
    let res = router(state.clone()).oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json<T: serde::de::DeserializeOwned>(state: &Arc<ApiState>, uri: &str) -> T {
    let (status, body) = get(state, uri).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[tokio::test]
async fn endpoints_serve_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = common::tiny_run(dir.path());
    let before = snapshot(&run);
    let state = Arc::new(ApiState::open(&run).unwrap());

    let meta: MetaResponse = get_json(&state, "/api/meta").await;
    assert_eq!(meta.epochs, vec![1, 2, 3]);
    assert_eq!(meta.method, "DVI");
    assert_eq!((meta.classes, meta.width, meta.height), (3, 60, 50));
    assert_eq!((meta.dataset.train, meta.dataset.test), (150, 45));

    let records: Vec<SampleRecord> = get_json(&state, "/api/epoch/2/embeddings").await;
    assert_eq!(records.len(), 195);

    let (status, png) = get(&state, "/api/epoch/2/landscape.png").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(tracevis::bundle_io::decode_png(&png).unwrap().0, 60);

    let m: serde_json::Value = get_json(&state, "/api/epoch/2/metrics").await;
    assert_eq!(m["epoch"], 2);
    assert_eq!(m["metrics"].as_array().unwrap().len(), 2);
    assert_eq!(m["temporal"].as_array().unwrap().len(), 2);

    // querying at a sample's own position returns that sample first
    let r = &records[17];
    let near: Vec<Neighbor> = get_json(&state, &format!("/api/epoch/2/neighbors?x={}&y={}&k=5", r.x, r.y)).await;
    assert_eq!(near.len(), 5);
    assert_eq!(near[0].sample.id, r.id);
    assert_eq!(near[0].distance, 0.0);
    assert!(near.windows(2).all(|w| w[0].distance <= w[1].distance));

    let path: Vec<TrajectoryPoint> = get_json(&state, &format!("/api/sample/{}/trajectory", r.id)).await;
    assert_eq!(path.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!((path[1].x, path[1].y), (r.x, r.y));

    assert_eq!(snapshot(&run), before, "the service must not write to the run directory");
}

#[tokio::test]
async fn bad_requests_get_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let run = common::tiny_run(dir.path());
    let state = Arc::new(ApiState::open(&run).unwrap());
    for (uri, want) in [
        ("/api/epoch/9/embeddings", StatusCode::NOT_FOUND),
        ("/api/epoch/9/landscape.png", StatusCode::NOT_FOUND),
        ("/api/sample/123456/trajectory", StatusCode::NOT_FOUND),
        ("/api/nothing", StatusCode::NOT_FOUND),
        ("/api/epoch/1/neighbors?x=0", StatusCode::BAD_REQUEST),
        ("/api/epoch/1/neighbors?x=0&y=nan", StatusCode::BAD_REQUEST),
        ("/api/epoch/1/neighbors?x=0&y=0&k=0", StatusCode::BAD_REQUEST),
        ("/api/epoch/9/neighbors?x=0&y=0", StatusCode::NOT_FOUND),
    ] {
        let (status, body) = get(&state, uri).await;
        assert_eq!(status, want, "{uri}");
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string(), "{uri}");
    }
}

#[test]
fn opening_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(ApiState::open(dir.path()), Err(tracevis::Error::MissingArtifact(_))));
}
