//! Local mock of a chat-completions vision endpoint.
//!
//! The mock recovers ground truth from the images themselves: synthetic test
//! frames carry their completion percentage in a solid block in the top-left
//! corner (see [`encode_label`]). The mock reads the block from every evaluated
//! frame it receives, so prompt assembly, image encoding and resizing are all
//! exercised end to end.
//!
//! Behaviour is configured with an [`OracleSpec`] plus an optional script of
//! canned HTTP outcomes served before normal replies.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use gvl_core::oracle::render_response;
use gvl_core::promptgen::EVAL_SECTION_MARKER;
use gvl_core::seed::seed_from_bytes;
use gvl_core::OracleSpec;
use image::{DynamicImage, Rgb, RgbImage};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

/// Labels are stored as `round(progress * 10_000)` in 24 bits (R, G, B bytes,
/// most significant first).
pub const LABEL_SCALE: f64 = 10_000.0;

/// Side of the label block: half the shorter image edge.
pub fn label_block_size(width: u32, height: u32) -> u32 {
    (width.min(height) / 2).max(1)
}

/// Writes `progress` into the top-left label block of `img`.
pub fn encode_label(img: &mut RgbImage, progress: f64) {
    let code = (progress.clamp(0.0, 100.0) * LABEL_SCALE).round() as u32;
    let pixel = Rgb([(code >> 16) as u8, (code >> 8) as u8, code as u8]);
    let block = label_block_size(img.width(), img.height());
    for y in 0..block {
        for x in 0..block {
            img.put_pixel(x, y, pixel);
        }
    }
}

/// Synthetic frame: a smooth background keyed by `progress` with the label block.
pub fn label_image(width: u32, height: u32, progress: f64) -> RgbImage {
    let shade = (progress * 2.0) as u32;
    let mut img = RgbImage::from_fn(width, height, |x, y| {
        Rgb([
            ((x * 255) / width.max(1)) as u8,
            ((y * 255) / height.max(1)) as u8,
            (shade % 256) as u8,
        ])
    });
    encode_label(&mut img, progress);
    img
}

/// Reads the label back, sampling the centre of the block and a second point
/// inside it; they must agree. Survives aspect-preserving downscaling.
pub fn decode_label(img: &DynamicImage) -> Option<f64> {
    let rgb = img.to_rgb8();
    let s = rgb.width().min(rgb.height()) / 4;
    if s < 2 {
        return None;
    }
    let centre = rgb.get_pixel(s, s);
    if rgb.get_pixel(s / 2 + s / 4, s / 2 + s / 4) != centre {
        return None;
    }
    let code = (u32::from(centre[0]) << 16) | (u32::from(centre[1]) << 8) | u32::from(centre[2]);
    let progress = f64::from(code) / LABEL_SCALE;
    (progress <= 100.0).then_some(progress)
}

/// Canned outcome for one request.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    /// Respond with this status and a JSON error body.
    Status(u16),
    /// Respond 200 with this message content.
    Reply(String),
    /// Respond 200 with a body that is not a chat-completions envelope.
    Malformed,
}

#[derive(Debug, Clone, Default)]
pub struct MockConfig {
    pub oracle: OracleSpec,
    pub script: Vec<ScriptStep>,
    /// Fixed delay before each reply.
    pub delay: Duration,
}

impl From<OracleSpec> for MockConfig {
    fn from(oracle: OracleSpec) -> Self {
        Self {
            oracle,
            ..Self::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("cannot bind mock endpoint to port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
}

struct MockState {
    oracle: OracleSpec,
    delay: Duration,
    script: Mutex<VecDeque<ScriptStep>>,
    requests: Mutex<Vec<Instant>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

/// A running mock endpoint. Shuts down when dropped.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and starts serving.
    pub async fn start(config: impl Into<MockConfig>, port: u16) -> Result<Self, MockError> {
        let config = config.into();
        let listener = TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|source| MockError::Bind { port, source })?;
        let addr = listener.local_addr().map_err(|source| MockError::Bind { port, source })?;
        let state = Arc::new(MockState {
            oracle: config.oracle,
            delay: config.delay,
            script: Mutex::new(config.script.into()),
            requests: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/chat/completions", post(handle))
            .route("/v1/chat/completions", post(handle))
            .with_state(Arc::clone(&state))
            .layer(axum::extract::DefaultBodyLimit::disable());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL for [`crate::client::EndpointConfig`], e.g. `http://127.0.0.1:PORT/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().unwrap().len()
    }

    /// Arrival time of every request so far.
    pub fn request_times(&self) -> Vec<Instant> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Starts a mock that answers every request according to `spec`.
pub async fn serve_mock(spec: OracleSpec, port: u16) -> Result<MockServer, MockError> {
    MockServer::start(spec, port).await
}

struct InFlight<'a>(&'a MockState);

impl<'a> InFlight<'a> {
    fn enter(state: &'a MockState) -> Self {
        let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        state.max_in_flight.fetch_max(now, Ordering::SeqCst);
        Self(state)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn handle(State(state): State<Arc<MockState>>, body: axum::body::Bytes) -> Response {
    state.requests.lock().unwrap().push(Instant::now());
    let _guard = InFlight::enter(&state);
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    let step = state.script.lock().unwrap().pop_front();
    match step {
        Some(ScriptStep::Status(code)) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, Json(json!({ "error": { "message": "scripted failure" } }))).into_response();
        }
        Some(ScriptStep::Reply(text)) => return completion(&text),
        Some(ScriptStep::Malformed) => return Json(json!({ "unexpected": true })).into_response(),
        None => {}
    }

    let request: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))).into_response()
        }
    };
    let oracle = state.oracle;
    let noise_key = seed_from_bytes(oracle.seed, &body);
    let text = tokio::task::spawn_blocking(move || {
        let frames = eval_frames(&request);
        render_response(&frames, &oracle, noise_key)
    })
    .await
    .unwrap_or_default();
    completion(&text)
}

fn completion(text: &str) -> Response {
    Json(json!({
        "id": "mock-completion",
        "object": "chat.completion",
        "model": "mock",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": text },
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

/// Walks the interleaved content and returns `(frame_number, label)` for every
/// image after the answer instructions. Unlabelled images count as 50%.
pub fn eval_frames(request: &Value) -> Vec<(u32, f64)> {
    let parts = request
        .pointer("/messages/0/content")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let mut in_eval = false;
    let mut pending: Option<u32> = None;
    let mut out = Vec::new();
    for part in &parts {
        match part.get("type").and_then(Value::as_str) {
            Some("text") => {
                let text = part.get("text").and_then(Value::as_str).unwrap_or_default();
                if text.contains(EVAL_SECTION_MARKER) {
                    in_eval = true;
                }
                pending = trailing_frame_number(text);
            }
            Some("image_url") => {
                if let (true, Some(n)) = (in_eval, pending.take()) {
                    let url = part
                        .pointer("/image_url/url")
                        .and_then(Value::as_str)
                        .unwrap_or_default();
                    out.push((n, decode_data_url(url).and_then(|img| decode_label(&img)).unwrap_or(50.0)));
                }
            }
            _ => {}
        }
    }
    out
}

fn trailing_frame_number(text: &str) -> Option<u32> {
    let line = text.trim_end().lines().last()?;
    line.strip_prefix("Frame ")?.strip_suffix(':')?.parse().ok()
}

fn decode_data_url(url: &str) -> Option<DynamicImage> {
    let (_, payload) = url.split_once(";base64,")?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(payload).ok()?;
    image::load_from_memory(&bytes).ok()
}
