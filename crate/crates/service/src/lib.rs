//! Session service for rating experiments (API version 1).
//!
//! | Method | Path | Purpose |
//! |---|---|---|
//! | GET | `/api/session` | plan metadata, scale labels, policies |
//! | GET | `/api/session/next?observer=ID` | next item for an observer |
//! | GET | `/media/{id}` | stimulus bytes, honours `Range: bytes=...` |
//! | POST | `/api/rating` | `{observer, stimulus, score, presentation_index}` |
//!
//! `next` answers with one of:
//! * `{"status":"item","phase":"training"|"main",...}` for a newly issued item
//!   (training items carry `presentation_index: null` and need no rating);
//! * `{"status":"awaiting_rating",...}` when the last main item is unrated;
//! * `{"status":"complete"}` once every main item has a rating.
//!
//! Ratings are appended to a CSV file that [`cbvc_core::study::ingest_ratings`]
//! reads. A rating for an item not yet issued, or a second rating for the
//! same presentation, is answered with 409; a malformed body or a score
//! outside 1..=5 with 400.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{SeekFrom, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cbvc_core::study::{parse_ratings, RatingRecord, RatingSet, SessionPlan, StimulusRecord, RATINGS_HEADER};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncSeekExt};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("media for {id} not found at {path}")]
    MissingMedia { id: String, path: PathBuf },
    #[error("media path for {0} escapes the media root")]
    UnsafeMedia(String),
    #[error("existing ratings file: {0}")]
    Ratings(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Default)]
struct ObserverProgress {
    training_issued: usize,
    main_issued: usize,
}

struct Sessions {
    observers: HashMap<String, ObserverProgress>,
    ratings: RatingSet,
}

pub struct AppState {
    plan: SessionPlan,
    media_root: PathBuf,
    ratings_path: PathBuf,
    sessions: Mutex<Sessions>,
}

fn media_path(root: &Path, rec: &StimulusRecord) -> Result<PathBuf, ServiceError> {
    let rel = Path::new(&rec.media);
    if rel.is_absolute() {
        return Ok(rel.to_path_buf());
    }
    if rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(ServiceError::UnsafeMedia(rec.id.clone()));
    }
    Ok(root.join(rel))
}

impl AppState {
    /// Checks that all plan media exist and picks up ratings already on disk,
    /// so a restarted service continues every observer where they left off.
    pub fn new(plan: SessionPlan, media_root: impl Into<PathBuf>, ratings_path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let media_root = media_root.into();
        let ratings_path = ratings_path.into();
        for rec in plan.training.iter().chain(&plan.items) {
            let p = media_path(&media_root, rec)?;
            if !p.is_file() {
                return Err(ServiceError::MissingMedia {
                    id: rec.id.clone(),
                    path: p,
                });
            }
        }
        let ratings = if ratings_path.exists() {
            let file = std::fs::File::open(&ratings_path).map_err(|source| ServiceError::Io {
                path: ratings_path.clone(),
                source,
            })?;
            if file.metadata().map(|m| m.len()).unwrap_or(0) == 0 {
                RatingSet::new()
            } else {
                parse_ratings(std::io::BufReader::new(file)).map_err(|e| ServiceError::Ratings(e.to_string()))?
            }
        } else {
            RatingSet::new()
        };
        let mut observers: HashMap<String, ObserverProgress> = HashMap::new();
        for r in ratings.records() {
            let p = observers.entry(r.observer.clone()).or_default();
            p.training_issued = plan.training.len();
            p.main_issued = p.main_issued.max(r.presentation_index + 1);
        }
        Ok(Self {
            plan,
            media_root,
            ratings_path,
            sessions: Mutex::new(Sessions { observers, ratings }),
        })
    }

    fn find(&self, id: &str) -> Option<&StimulusRecord> {
        self.plan.training.iter().chain(&self.plan.items).find(|r| r.id == id)
    }

    fn append_rating(&self, record: &RatingRecord) -> std::io::Result<()> {
        let fresh = std::fs::metadata(&self.ratings_path).map(|m| m.len() == 0).unwrap_or(true);
        let mut line = String::new();
        if fresh {
            line.push_str(&RATINGS_HEADER.join(","));
            line.push('\n');
        }
        line.push_str(&format!(
            "{},{},{},{},{}\n",
            record.observer, record.stimulus, record.score, record.timestamp, record.presentation_index
        ));
        let mut f = OpenOptions::new().create(true).append(true).open(&self.ratings_path)?;
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(session_info))
        .route("/api/session/next", get(next_item))
        .route("/api/rating", post(post_rating))
        .route("/media/{id}", get(media))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("session service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn session_info(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "api_version": API_VERSION,
        "plan_version": s.plan.version,
        "seed": s.plan.seed,
        "scale_labels": s.plan.scale_labels,
        "policy": s.plan.policy,
        "training_count": s.plan.training.len(),
        "item_count": s.plan.items.len(),
    }))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    observer: String,
}

#[derive(Debug, Serialize)]
struct ItemView<'a> {
    status: &'static str,
    phase: &'static str,
    stimulus: &'a str,
    media_url: String,
    presentation_index: Option<usize>,
    position: usize,
    total: usize,
}

async fn next_item(State(s): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    if q.observer.trim().is_empty() || q.observer.contains([',', '\n', '"']) {
        return error(StatusCode::BAD_REQUEST, "observer id must be non-empty without ',', '\"' or newlines");
    }
    let mut sessions = s.sessions.lock().expect("session lock");
    let Sessions { observers, ratings } = &mut *sessions;
    let p = observers.entry(q.observer.clone()).or_default();
    let total = s.plan.training.len() + s.plan.items.len();
    let view = |status, phase, rec: &StimulusRecord, idx: Option<usize>, position| {
        Json(ItemView {
            status,
            phase,
            stimulus: &rec.id,
            media_url: format!("/media/{}", rec.id),
            presentation_index: idx,
            position,
            total,
        })
        .into_response()
    };

    if p.training_issued < s.plan.training.len() {
        let rec = &s.plan.training[p.training_issued];
        p.training_issued += 1;
        return view("item", "training", rec, None, p.training_issued - 1);
    }
    let offset = s.plan.training.len();
    if p.main_issued > 0 && !ratings.contains(&q.observer, p.main_issued - 1) {
        let idx = p.main_issued - 1;
        return view("awaiting_rating", "main", &s.plan.items[idx], Some(idx), offset + idx);
    }
    if p.main_issued >= s.plan.items.len() {
        return Json(json!({ "status": "complete", "total": total })).into_response();
    }
    let idx = p.main_issued;
    p.main_issued += 1;
    view("item", "main", &s.plan.items[idx], Some(idx), offset + idx)
}

#[derive(Debug, Deserialize)]
struct RatingBody {
    observer: String,
    stimulus: String,
    score: i64,
    presentation_index: usize,
}

async fn post_rating(State(s): State<Arc<AppState>>, body: Result<Json<RatingBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    if !(1..=5).contains(&body.score) {
        return error(StatusCode::BAD_REQUEST, format!("score {} outside 1..=5", body.score));
    }
    let mut sessions = s.sessions.lock().expect("session lock");
    let issued = sessions.observers.get(&body.observer).map(|p| p.main_issued).unwrap_or(0);
    let matches_plan = s.plan.items.get(body.presentation_index).is_some_and(|r| r.id == body.stimulus);
    if body.presentation_index >= issued || !matches_plan {
        return error(
            StatusCode::CONFLICT,
            format!(
                "{} at presentation {} was not issued to {}",
                body.stimulus, body.presentation_index, body.observer
            ),
        );
    }
    if sessions.ratings.contains(&body.observer, body.presentation_index) {
        return error(StatusCode::CONFLICT, "presentation already rated");
    }
    let record = RatingRecord {
        observer: body.observer,
        stimulus: body.stimulus,
        score: body.score as u8,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        presentation_index: body.presentation_index,
    };
    if let Err(e) = s.append_rating(&record) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("could not store rating: {e}"));
    }
    let observer = record.observer.clone();
    sessions.ratings.push(record).expect("validated above");
    let done = (0..s.plan.items.len())
        .filter(|&i| sessions.ratings.contains(&observer, i))
        .count();
    Json(json!({ "status": "recorded", "remaining": s.plan.items.len() - done })).into_response()
}

/// Parses a single `bytes=` range against a file of `len` bytes.
/// `Ok(None)` means no usable Range header; `Err(())` means unsatisfiable.
pub fn parse_range(value: &str, len: u64) -> Result<Option<(u64, u64)>, ()> {
    let Some(spec) = value.trim().strip_prefix("bytes=") else {
        return Ok(None);
    };
    if spec.contains(',') {
        return Ok(None);
    }
    let (a, b) = spec.split_once('-').ok_or(())?;
    let (a, b) = (a.trim(), b.trim());
    let range = match (a.is_empty(), b.is_empty()) {
        (true, true) => return Err(()),
        (true, false) => {
            let n: u64 = b.parse().map_err(|_| ())?;
            if n == 0 || len == 0 {
                return Err(());
            }
            (len.saturating_sub(n), len - 1)
        }
        (false, _) => {
            let start: u64 = a.parse().map_err(|_| ())?;
            let end = if b.is_empty() { len.saturating_sub(1) } else { b.parse::<u64>().map_err(|_| ())?.min(len.saturating_sub(1)) };
            if start >= len || end < start {
                return Err(());
            }
            (start, end)
        }
    };
    Ok(Some(range))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("mp4") | Some("m4v") => "video/mp4",
        Some("webm") => "video/webm",
        Some("mkv") => "video/x-matroska",
        Some("hevc") | Some("265") | Some("h265") => "video/H265",
        _ => "application/octet-stream",
    }
}

async fn media(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> Response {
    let Some(rec) = s.find(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown stimulus {id}"));
    };
    let path = match media_path(&s.media_root, rec) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::FORBIDDEN, e.to_string()),
    };
    let mut file = match tokio::fs::File::open(&path).await {
        Ok(f) => f,
        Err(_) => return error(StatusCode::NOT_FOUND, format!("media for {id} is missing")),
    };
    let len = match file.metadata().await {
        Ok(m) => m.len(),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let range = headers
        .get(header::RANGE)
        .and_then(|v| v.to_str().ok())
        .map(|v| parse_range(v, len))
        .unwrap_or(Ok(None));
    let ctype = HeaderValue::from_static(content_type(&path));
    match range {
        Err(()) => Response::builder()
            .status(StatusCode::RANGE_NOT_SATISFIABLE)
            .header(header::CONTENT_RANGE, format!("bytes */{len}"))
            .body(Body::empty())
            .expect("static response"),
        Ok(None) => {
            let mut buf = Vec::with_capacity(len as usize);
            if let Err(e) = file.read_to_end(&mut buf).await {
                return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
            }
            Response::builder()
                .header(header::CONTENT_TYPE, ctype)
                .header(header::ACCEPT_RANGES, "bytes")
                .header(header::CONTENT_LENGTH, len)
                .body(Body::from(buf))
                .expect("static response")
        }
        Ok(Some((start, end))) => {
            let n = (end - start + 1) as usize;
            let mut buf = vec![0u8; n];
            let read = async {
                file.seek(SeekFrom::Start(start)).await?;
                file.read_exact(&mut buf).await
            };
            if let Err(e) = read.await {
                return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
            }
            Response::builder()
                .status(StatusCode::PARTIAL_CONTENT)
                .header(header::CONTENT_TYPE, ctype)
                .header(header::ACCEPT_RANGES, "bytes")
                .header(header::CONTENT_RANGE, format!("bytes {start}-{end}/{len}"))
                .header(header::CONTENT_LENGTH, n)
                .body(Body::from(buf))
                .expect("static response")
        }
    }
}
