//! Read-only HTTP API over the bundles of a run directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracevis_core::landscape::{sample_trajectory, BundleMeta, Palette, SampleRecord};
use tracevis_core::subject::Split;

use crate::bundle_io::{load_bundle_meta, PNG_FILE};
use crate::error::{Error, Result};
use crate::pipeline::RunLayout;
use crate::store::read_artifact;

/// A bundle as held in memory by the service.
pub struct CachedEpoch {
    pub meta: BundleMeta,
    pub png: Vec<u8>,
}

pub struct ApiState {
    layout: RunLayout,
    epochs: Vec<usize>,
    cache: RwLock<HashMap<usize, Arc<CachedEpoch>>>,
}

impl ApiState {
    /// Indexes the bundles of `run_dir`; bundles themselves load lazily.
    pub fn open(run_dir: &Path) -> Result<Self> {
        let layout = RunLayout::new(run_dir);
        let dir = layout.bundles_dir();
        let entries = fs::read_dir(&dir).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(dir.clone()),
            _ => Error::io(&dir, e),
        })?;
        let mut epochs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            let Some(epoch) = name.to_str().and_then(|n| n.strip_prefix("epoch_")).and_then(|n| n.parse().ok()) else {
                continue;
            };
            if entry.path().join(crate::bundle_io::META_FILE).is_file() {
                epochs.push(epoch);
            }
        }
        if epochs.is_empty() {
            return Err(Error::MissingArtifact(dir));
        }
        epochs.sort_unstable();
        Ok(ApiState { layout, epochs, cache: RwLock::new(HashMap::new()) })
    }

    pub fn epochs(&self) -> &[usize] {
        &self.epochs
    }

    pub fn run_dir(&self) -> &PathBuf {
        &self.layout.root
    }

    /// Loads an epoch once; later requests share the cached copy.
    pub fn epoch(&self, epoch: usize) -> Result<Option<Arc<CachedEpoch>>, ApiError> {
        if self.epochs.binary_search(&epoch).is_err() {
            return Ok(None);
        }
        if let Some(hit) = self.cache.read().expect("cache lock").get(&epoch) {
            return Ok(Some(hit.clone()));
        }
        let dir = self.layout.bundle_dir(epoch);
        let meta = load_bundle_meta(&dir).map_err(ApiError::internal)?;
        let png = read_artifact(&dir.join(PNG_FILE)).map_err(ApiError::internal)?;
        let loaded = Arc::new(CachedEpoch { meta, png });
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Some(cache.entry(epoch).or_insert(loaded).clone()))
    }

    fn require(&self, epoch: usize) -> Result<Arc<CachedEpoch>, ApiError> {
        self.epoch(epoch)?.ok_or_else(|| ApiError::not_found(format!("unknown epoch {epoch}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message }
    }
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
    fn internal(e: Error) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<ApiState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/epoch/{t}/embeddings", get(embeddings))
        .route("/api/epoch/{t}/landscape.png", get(landscape))
        .route("/api/epoch/{t}/metrics", get(metrics))
        .route("/api/epoch/{t}/neighbors", get(neighbors))
        .route("/api/sample/{id}/trajectory", get(trajectory))
        .fallback(|| async { ApiError::not_found("no such endpoint".into()) })
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetSummary {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct MetaResponse {
    pub epochs: Vec<usize>,
    pub method: String,
    pub classes: usize,
    pub palette: Palette,
    pub width: usize,
    pub height: usize,
    pub dataset: DatasetSummary,
}

async fn meta(State(s): State<Shared>) -> Result<Json<MetaResponse>, ApiError> {
    let first = s.require(s.epochs[0])?;
    let m = &first.meta;
    let count = |split| m.embeddings.iter().filter(|r| r.split == split).count();
    Ok(Json(MetaResponse {
        epochs: s.epochs.clone(),
        method: m.method.clone(),
        classes: m.class_count,
        palette: m.palette.clone(),
        width: m.width,
        height: m.height,
        dataset: DatasetSummary { train: count(Split::Train), test: count(Split::Test) },
    }))
}

async fn embeddings(State(s): State<Shared>, UrlPath(t): UrlPath<usize>) -> Result<Json<Vec<SampleRecord>>, ApiError> {
    Ok(Json(s.require(t)?.meta.embeddings.clone()))
}

async fn landscape(State(s): State<Shared>, UrlPath(t): UrlPath<usize>) -> Result<Response, ApiError> {
    let e = s.require(t)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], e.png.clone()).into_response())
}

async fn metrics(State(s): State<Shared>, UrlPath(t): UrlPath<usize>) -> Result<Json<serde_json::Value>, ApiError> {
    let e = s.require(t)?;
    Ok(Json(json!({ "epoch": t, "metrics": e.meta.metrics, "temporal": e.meta.temporal })))
}

async fn trajectory(State(s): State<Shared>, UrlPath(id): UrlPath<u64>) -> Result<Response, ApiError> {
    let mut loaded = Vec::with_capacity(s.epochs.len());
    for &t in &s.epochs {
        loaded.push(s.require(t)?);
    }
    let metas: Vec<&BundleMeta> = loaded.iter().map(|e| &e.meta).collect();
    match sample_trajectory(&metas, id) {
        Ok(points) => Ok(Json(points).into_response()),
        Err(tracevis_core::Error::NotFound(_)) => Err(ApiError::not_found(format!("unknown sample {id}"))),
        Err(e) => Err(ApiError::internal(e.into())),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Neighbor {
    pub distance: f32,
    #[serde(flatten)]
    pub sample: SampleRecord,
}

fn parse_coord(query: &HashMap<String, String>, name: &str) -> Result<f32, ApiError> {
    let raw = query.get(name).ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")))?;
    match raw.parse::<f32>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ApiError::bad_request(format!("`{name}` must be a finite number"))),
    }
}

async fn neighbors(
    State(s): State<Shared>,
    UrlPath(t): UrlPath<usize>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Vec<Neighbor>>, ApiError> {
    let (x, y) = (parse_coord(&q, "x")?, parse_coord(&q, "y")?);
    let k = match q.get("k").map(String::as_str) {
        None => 1,
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if k > 0 => k,
            _ => return Err(ApiError::bad_request("`k` must be a positive integer")),
        },
    };
    let e = s.require(t)?;
    Ok(Json(nearest(&e.meta.embeddings, x, y, k)))
}

/// The `k` records closest to `(x, y)`, ties broken by record order.
pub fn nearest(records: &[SampleRecord], x: f32, y: f32, k: usize) -> Vec<Neighbor> {
    let mut scored: Vec<(f32, usize)> =
        records.iter().enumerate().map(|(i, r)| ((r.x - x).hypot(r.y - y), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(distance, i)| Neighbor { distance, sample: records[i].clone() }).collect()
}

pub async fn serve(run_dir: &Path, port: u16) -> anyhow::Result<()> {
    let state = Arc::new(ApiState::open(run_dir)?);
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("serving {} on http://{}", run_dir.display(), listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
