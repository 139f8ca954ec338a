//! HTTP front end for the slide pipeline.
//!
//! | method | path | success body |
//! |---|---|---|
//! | POST | `/capture` | SlideDocument (canonical JSON) |
//! | GET | `/slides/{id}` | cached SlideDocument |
//! | GET | `/slides/{id}/audio?mode=&region=` | narration script and transcript |
//! | GET | `/healthz` | service status |
//!
//! `POST /capture` takes the encoded image as the request body. An empty body
//! fetches a frame from the configured image source instead. Slide ids are the
//! first 16 hex digits of the SHA-256 of the image bytes. Failures carry
//! `{"error": {"kind", "message"}}`; 500 responses replace the message with an
//! opaque `id` that also appears in the server log.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use image::RgbImage;
use lru::LruCache;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use crate::dataio::LabelSet;
use crate::error::{Error, Result};
use crate::extract::{AdapterRegistry, SlideDocument};
use crate::narrate::{script_for, transcript, Mode, Utterance};
use crate::pipeline::{process_slide, PipelineOptions};
use crate::segnet::SegNet;

/// JSON schema (draft-07) for the non-document response bodies.
pub const SERVICE_SCHEMA_V1: &str = include_str!("../schema/service.v1.json");

pub const DEFAULT_CACHE_SIZE: usize = 64;
const MAX_UPLOAD_BYTES: usize = 32 << 20;
const MAX_PIXELS: u64 = 16 << 20;

/// Where `POST /capture` gets a frame when the request carries none.
pub trait ImageSource: Send + Sync {
    /// Encoded image bytes of the current frame.
    fn fetch(&self) -> Result<Vec<u8>>;
}

/// Reads the newest image file in a directory (by modification time, then
/// by name).
#[derive(Clone, Debug)]
pub struct DropBox {
    dir: PathBuf,
}

impl DropBox {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn newest(&self) -> Result<PathBuf> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut best: Option<(std::time::SystemTime, PathBuf)> = None;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let path = entry.path();
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("png")) || !path.is_file() {
                continue;
            }
            let modified = entry
                .metadata()
                .and_then(|m| m.modified())
                .map_err(|e| Error::io(&path, e))?;
            if best.as_ref().is_none_or(|(t, p)| (modified, &path) > (*t, p)) {
                best = Some((modified, path));
            }
        }
        best.map(|(_, p)| p)
            .ok_or_else(|| Error::NotFound(format!("no PNG image in drop box {}", self.dir.display())))
    }
}

impl ImageSource for DropBox {
    fn fetch(&self) -> Result<Vec<u8>> {
        let path = self.newest()?;
        fs::read(&path).map_err(|e| Error::io(&path, e))
    }
}

struct Job {
    image: RgbImage,
    image_ref: String,
    reply: oneshot::Sender<Result<SlideDocument>>,
}

/// Single consumer in front of the network: jobs run one at a time in
/// arrival order.
#[derive(Clone)]
struct InferenceQueue {
    tx: mpsc::Sender<Job>,
}

impl InferenceQueue {
    fn spawn(net: SegNet, labels: LabelSet, registry: AdapterRegistry, opts: PipelineOptions) -> Result<Self> {
        net.check_label_count(labels.len())?;
        let (tx, rx) = mpsc::channel::<Job>();
        thread::Builder::new()
            .name("leanet-inference".into())
            .spawn(move || {
                for job in rx {
                    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                        process_slide(&net, &labels, &job.image, &job.image_ref, &registry, &opts)
                    }))
                    .unwrap_or_else(|_| Err(Error::config("inference panicked")));
                    let _ = job.reply.send(out);
                }
            })
            .map_err(|e| Error::io("leanet-inference", e))?;
        Ok(Self { tx })
    }

    async fn run(&self, image: RgbImage, image_ref: String) -> Result<SlideDocument> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Job { image, image_ref, reply })
            .map_err(|_| Error::config("inference worker has stopped"))?;
        rx.await.map_err(|_| Error::config("inference worker dropped the request"))?
    }
}

struct CachedSlide {
    doc: SlideDocument,
    body: String,
}

struct AppState {
    queue: InferenceQueue,
    cache: Mutex<LruCache<String, Arc<CachedSlide>>>,
    source: Option<Arc<dyn ImageSource>>,
    classes: usize,
}

pub struct ServiceConfig {
    pub cache_size: usize,
    pub pipeline: PipelineOptions,
    pub source: Option<Arc<dyn ImageSource>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            cache_size: DEFAULT_CACHE_SIZE,
            pipeline: PipelineOptions::default(),
            source: None,
        }
    }
}

/// Build the router. Spawns the inference worker, so call once per service.
pub fn router(net: SegNet, labels: LabelSet, registry: AdapterRegistry, config: ServiceConfig) -> Result<Router> {
    let cache_size =
        NonZeroUsize::new(config.cache_size).ok_or_else(|| Error::config("cache size must be at least 1"))?;
    let classes = labels.len();
    let state = Arc::new(AppState {
        queue: InferenceQueue::spawn(net, labels, registry, config.pipeline)?,
        cache: Mutex::new(LruCache::new(cache_size)),
        source: config.source,
        classes,
    });
    Ok(Router::new()
        .route("/capture", post(capture))
        .route("/slides/{id}", get(get_slide))
        .route("/slides/{id}/audio", get(get_audio))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state))
}

/// Serve `app` on a bound listener until the process ends.
pub async fn serve(app: Router, listener: tokio::net::TcpListener) -> Result<()> {
    let local = listener.local_addr().map_err(|e| Error::io("listener", e))?;
    log::info!("listening on http://{local}");
    axum::serve(listener, app)
        .await
        .map_err(|e| Error::io(local.to_string(), e))
}

pub fn slide_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

fn error_body(status: StatusCode, kind: &str, message: &str) -> Response {
    (status, axum::Json(json!({ "error": { "kind": kind, "message": message } }))).into_response()
}

fn internal(err: &Error) -> Response {
    let id = format!("{:016x}", rand::random::<u64>());
    log::error!("request failed [{id}]: {err}");
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        axum::Json(json!({ "error": { "kind": "internal", "id": id } })),
    )
        .into_response()
}

fn document_response(slide_id: &str, body: &str) -> Response {
    let mut resp = (
        StatusCode::OK,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body.to_string(),
    )
        .into_response();
    if let Ok(v) = HeaderValue::from_str(slide_id) {
        resp.headers_mut().insert("x-slide-id", v);
    }
    if let Ok(v) = HeaderValue::from_str(&format!("/slides/{slide_id}")) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    resp
}

fn decode_upload(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let image = image::load_from_memory(bytes)
        .map_err(|e| format!("body is not a readable image: {e}"))?
        .to_rgb8();
    let (w, h) = image.dimensions();
    if w as u64 * h as u64 > MAX_PIXELS {
        return Err(format!("image is {w}x{h}; at most {MAX_PIXELS} pixels are accepted"));
    }
    Ok(image)
}

async fn capture(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let bytes = if body.is_empty() {
        let Some(source) = state.source.clone() else {
            return error_body(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "empty body and no image source is configured",
            );
        };
        match tokio::task::spawn_blocking(move || source.fetch()).await {
            Ok(Ok(b)) => b,
            Ok(Err(e @ Error::NotFound(_))) => return error_body(StatusCode::NOT_FOUND, "not_found", &e.to_string()),
            Ok(Err(e)) => return internal(&e),
            Err(e) => return internal(&Error::config(format!("image source task failed: {e}"))),
        }
    } else {
        body.to_vec()
    };
    let id = slide_id(&bytes);
    if let Some(hit) = state.cache.lock().expect("cache lock").get(&id).cloned() {
        return document_response(&id, &hit.body);
    }
    let image = match decode_upload(&bytes) {
        Ok(img) => img,
        Err(msg) => return error_body(StatusCode::BAD_REQUEST, "bad_request", &msg),
    };
    let doc = match state.queue.run(image, format!("{id}.png")).await {
        Ok(d) => d,
        Err(e) => return internal(&e),
    };
    let body = match doc.to_canonical_json() {
        Ok(b) => b,
        Err(e) => return internal(&e),
    };
    let entry = Arc::new(CachedSlide { doc, body });
    state.cache.lock().expect("cache lock").put(id.clone(), entry.clone());
    document_response(&id, &entry.body)
}

fn cached(state: &AppState, id: &str) -> Option<Arc<CachedSlide>> {
    state.cache.lock().expect("cache lock").get(id).cloned()
}

async fn get_slide(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match cached(&state, &id) {
        Some(hit) => document_response(&id, &hit.body),
        None => error_body(StatusCode::NOT_FOUND, "not_found", &format!("no slide `{id}`")),
    }
}

#[derive(Debug, Deserialize)]
struct AudioQuery {
    mode: Option<String>,
    region: Option<String>,
}

#[derive(Debug, Serialize)]
struct AudioBody {
    slide_id: String,
    mode: Mode,
    utterances: Vec<Utterance>,
    transcript: String,
}

async fn get_audio(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AudioQuery>,
) -> Response {
    let Some(hit) = cached(&state, &id) else {
        return error_body(StatusCode::NOT_FOUND, "not_found", &format!("no slide `{id}`"));
    };
    let mode = match q.mode.as_deref().filter(|m| !m.is_empty()) {
        None => Mode::NonInteractive,
        Some(m) => match m.parse::<Mode>() {
            Ok(m) => m,
            Err(e) => return error_body(StatusCode::BAD_REQUEST, "bad_request", &e.to_string()),
        },
    };
    let region = match q.region.as_deref().filter(|r| !r.is_empty()) {
        None => None,
        Some(r) => match r.parse::<u32>() {
            Ok(v) => Some(v),
            Err(_) => {
                return error_body(StatusCode::BAD_REQUEST, "bad_request", &format!("region `{r}` is not an id"))
            }
        },
    };
    match script_for(&hit.doc, mode, region) {
        Ok(script) => axum::Json(AudioBody {
            slide_id: id,
            mode,
            transcript: transcript(&script),
            utterances: script.utterances,
        })
        .into_response(),
        Err(e @ Error::NotFound(_)) => error_body(StatusCode::NOT_FOUND, "not_found", &e.to_string()),
        Err(e) => error_body(StatusCode::BAD_REQUEST, "bad_request", &e.to_string()),
    }
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    let cached = state.cache.lock().expect("cache lock").len();
    axum::Json(json!({ "status": "ok", "classes": state.classes, "cached": cached })).into_response()
}

/// Drop-box source rooted at `dir`, if the directory exists.
pub fn drop_box(dir: &Path) -> Result<Arc<dyn ImageSource>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(format!("drop box directory {}", dir.display())));
    }
    Ok(Arc::new(DropBox::new(dir)))
}
