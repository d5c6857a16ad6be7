//! Chat-completions client for vision-language endpoints.
//!
//! A prompt becomes a single user message whose `content` array interleaves
//! `text` parts and `image_url` parts carrying PNG data URLs. Requests are
//! retried on 429, 5xx, timeouts and connection errors with exponential backoff
//! (`backoff_base * 2^(attempt-1)`, ±20% jitter). A shared semaphore caps the
//! number of requests in flight.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use gvl_core::{FrameRef, PromptPart, PromptSequence};
use image::imageops::FilterType;
use image::{DynamicImage, ImageFormat};
use rand::Rng;
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use url::Url;

pub const API_KEY_ENV: &str = "OPENGVL_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transient failure after {attempts} attempt(s): {message}")]
    Transient { attempts: u32, message: String },
    #[error("request rejected with HTTP {status}: {body}")]
    Permanent { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("cannot decode frame {path}: {reason}")]
    FrameDecode { path: String, reason: String },
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: Url,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_concurrency: usize,
    /// Longest image edge in pixels after resizing.
    pub image_max_edge: u32,
}

impl EndpointConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 1.0;
    pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;
    pub const DEFAULT_IMAGE_MAX_EDGE: u32 = 512;

    pub fn new(base_url: &str, model_name: impl Into<String>) -> Result<Self, ClientError> {
        let base_url = Url::parse(base_url).map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            base_url,
            model_name: model_name.into(),
            temperature: Self::DEFAULT_TEMPERATURE,
            max_output_tokens: Self::DEFAULT_MAX_OUTPUT_TOKENS,
            request_timeout: Duration::from_secs(180),
            max_retries: 5,
            backoff_base: Duration::from_secs(1),
            max_concurrency: 4,
            image_max_edge: Self::DEFAULT_IMAGE_MAX_EDGE,
        })
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config("temperature must be >= 0".into()));
        }
        if self.max_concurrency == 0 {
            return Err(ClientError::Config("max_concurrency must be >= 1".into()));
        }
        if self.image_max_edge == 0 {
            return Err(ClientError::Config("image_max_edge must be >= 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(ClientError::Config("model name is empty".into()));
        }
        Ok(())
    }

    /// The URL requests are posted to. A base URL already ending in
    /// `chat/completions` is used verbatim.
    pub fn completions_url(&self) -> Url {
        if self.base_url.path().trim_end_matches('/').ends_with("chat/completions") {
            return self.base_url.clone();
        }
        let mut base = self.base_url.clone();
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        base.join("chat/completions").expect("relative join")
    }
}

/// API key. Never printed.
#[derive(Clone)]
pub struct Credentials(String);

impl Credentials {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .map(Self)
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Credentials(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    /// Verbatim message content; may be empty.
    pub text: String,
    pub latency: Duration,
    pub attempt_count: u32,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub mime: &'static str,
    pub bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

impl EncodedImage {
    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// Size after shrinking so the longest edge is at most `max_edge`. Never upscales.
pub fn fit_within(width: u32, height: u32, max_edge: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_edge {
        return (width, height);
    }
    let scale = f64::from(max_edge) / f64::from(longest);
    let w = ((f64::from(width) * scale).round() as u32).clamp(1, max_edge);
    let h = ((f64::from(height) * scale).round() as u32).clamp(1, max_edge);
    (w, h)
}

/// Decodes, resizes (aspect preserved, longest edge `<= image_max_edge`) and
/// re-encodes a frame as PNG. Output bytes are a pure function of the input.
pub fn encode_image(frame: &FrameRef, image_max_edge: u32) -> Result<EncodedImage, ClientError> {
    encode_image_path(Path::new(&frame.image_path), image_max_edge)
}

pub fn encode_image_path(path: &Path, image_max_edge: u32) -> Result<EncodedImage, ClientError> {
    let decode_err = |reason: String| ClientError::FrameDecode {
        path: path.display().to_string(),
        reason,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    encode_dynamic(img, image_max_edge).map_err(decode_err)
}

pub(crate) fn encode_dynamic(img: DynamicImage, image_max_edge: u32) -> Result<EncodedImage, String> {
    let rgb = img.to_rgb8();
    let (w, h) = fit_within(rgb.width(), rgb.height(), image_max_edge);
    let rgb = if (w, h) == rgb.dimensions() {
        rgb
    } else {
        image::imageops::resize(&rgb, w, h, FilterType::Triangle)
    };
    let mut bytes = Vec::new();
    rgb.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(EncodedImage {
        mime: "image/png",
        bytes,
        width: w,
        height: h,
    })
}

/// Delay before retry number `attempt` (1-based). `jitter` in `[-1, 1]` scales
/// the ±20% band.
pub fn backoff_delay(attempt: u32, base: Duration, jitter: f64) -> Duration {
    let factor = 2f64.powi(attempt.saturating_sub(1).min(30) as i32);
    base.mul_f64(factor * (1.0 + 0.2 * jitter.clamp(-1.0, 1.0)))
}

/// Builds the chat-completions JSON body.
pub fn request_body(prompt: &PromptSequence, cfg: &EndpointConfig) -> Result<Value, ClientError> {
    let mut content = Vec::with_capacity(prompt.parts().len());
    for part in prompt.parts() {
        match part {
            PromptPart::Text(text) => content.push(json!({ "type": "text", "text": text })),
            PromptPart::Image(frame) => {
                let encoded = encode_image(frame, cfg.image_max_edge)?;
                content.push(json!({
                    "type": "image_url",
                    "image_url": { "url": encoded.data_url() }
                }));
            }
        }
    }
    Ok(json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
        "messages": [{ "role": "user", "content": content }],
    }))
}

/// Extracts the message text from a chat-completions response. `null` content
/// is an empty reply.
pub fn response_text(body: &Value) -> Result<String, ClientError> {
    let message = body
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(|c| c.get("message"))
        .ok_or_else(|| ClientError::Protocol("missing choices[0].message".into()))?;
    match message.get("content") {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        Some(other) => Err(ClientError::Protocol(format!(
            "unexpected content type: {other}"
        ))),
    }
}

/// Shareable client; clones share the concurrency limit.
#[derive(Clone)]
pub struct VlmClient {
    http: reqwest::Client,
    cfg: Arc<EndpointConfig>,
    credentials: Option<Credentials>,
    limiter: Arc<Semaphore>,
    counter: Arc<AtomicU64>,
}

impl fmt::Debug for VlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VlmClient")
            .field("cfg", &self.cfg)
            .field("credentials", &self.credentials)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(String, Option<String>),
    Retry(String),
}

impl VlmClient {
    pub fn new(cfg: EndpointConfig, credentials: Option<Credentials>) -> Result<Self, ClientError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            http,
            limiter: Arc::new(Semaphore::new(cfg.max_concurrency)),
            cfg: Arc::new(cfg),
            credentials,
            counter: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub async fn complete(&self, prompt: &PromptSequence) -> Result<RawCompletion, ClientError> {
        let cfg = Arc::clone(&self.cfg);
        let prompt = prompt.clone();
        let body = tokio::task::spawn_blocking(move || request_body(&prompt, &cfg))
            .await
            .map_err(|e| ClientError::Config(format!("encoder task failed: {e}")))??;
        let body = serde_json::to_vec(&body).map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.send(body).await
    }

    /// Posts a prepared JSON body with retries.
    pub async fn send(&self, body: Vec<u8>) -> Result<RawCompletion, ClientError> {
        let url = self.cfg.completions_url();
        let started = Instant::now();
        let local_id = self.counter.fetch_add(1, Ordering::Relaxed);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("semaphore never closed");
                self.attempt(&url, body.clone()).await?
            };
            match outcome {
                Attempt::Done(text, id) => {
                    return Ok(RawCompletion {
                        text,
                        latency: started.elapsed(),
                        attempt_count: attempt,
                        request_id: id.unwrap_or_else(|| format!("local-{local_id}")),
                    })
                }
                Attempt::Retry(message) => {
                    if attempt > self.cfg.max_retries {
                        return Err(ClientError::Transient {
                            attempts: attempt,
                            message,
                        });
                    }
                    let jitter = rand::rng().random_range(-1.0..=1.0);
                    let delay = backoff_delay(attempt, self.cfg.backoff_base, jitter);
                    tracing::warn!(attempt, ?delay, %message, "transient endpoint failure, retrying");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    async fn attempt(&self, url: &Url, body: Vec<u8>) -> Result<Attempt, ClientError> {
        let mut request = self
            .http
            .post(url.clone())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.credentials {
            request = request.bearer_auth(key.expose());
        }
        let response = match request.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Ok(Attempt::Retry(describe(&e)))
            }
            Err(e) => return Err(ClientError::Protocol(describe(&e))),
        };
        let status = response.status();
        let header_id = response
            .headers()
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Ok(Attempt::Retry(describe(&e))),
            Err(e) => return Err(ClientError::Protocol(describe(&e))),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Ok(Attempt::Retry(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(ClientError::Permanent {
                status: status.as_u16(),
                body: truncate(&text, 500),
            });
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::Protocol(format!("invalid JSON: {e}")))?;
        let id = header_id.or_else(|| json.get("id").and_then(Value::as_str).map(str::to_owned));
        Ok(Attempt::Done(response_text(&json)?, id))
    }
}

/// One-shot helper that builds a client for a single call.
pub async fn complete(
    prompt: &PromptSequence,
    cfg: &EndpointConfig,
    credentials: Option<Credentials>,
) -> Result<RawCompletion, ClientError> {
    VlmClient::new(cfg.clone(), credentials)?.complete(prompt).await
}

// reqwest errors carry the URL but never headers, so they cannot leak the key.
fn describe(e: &reqwest::Error) -> String {
    let mut s = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(inner) = source {
        s.push_str(": ");
        s.push_str(&inner.to_string());
        source = inner.source();
    }
    s
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn frame_at(path: &Path, w: u32, h: u32) -> FrameRef {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 7]))
            .save(path)
            .unwrap();
        FrameRef {
            timestep: 0,
            image_path: path.to_string_lossy().into_owned(),
            width: w,
            height: h,
        }
    }

    #[test]
    fn resizes_preserving_aspect() {
        assert_eq!(fit_within(1280, 720, 640), (640, 360));
        assert_eq!(fit_within(320, 240, 640), (320, 240));
        assert_eq!(fit_within(720, 1280, 512), (288, 512));
        let dir = tempfile::tempdir().unwrap();
        let big = frame_at(&dir.path().join("big.png"), 1280, 720);
        let enc = encode_image(&big, 640).unwrap();
        assert_eq!((enc.width, enc.height), (640, 360));
        let decoded = image::load_from_memory(&enc.bytes).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (640, 360));
        let small = frame_at(&dir.path().join("small.jpg"), 320, 240);
        let enc = encode_image(&small, 640).unwrap();
        assert_eq!((enc.width, enc.height), (320, 240));
    }

    #[test]
    fn encoding_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let f = frame_at(&dir.path().join("a.png"), 900, 700);
        assert_eq!(encode_image(&f, 512).unwrap(), encode_image(&f, 512).unwrap());
        assert!(encode_image(&f, 512).unwrap().data_url().starts_with("data:image/png;base64,"));
    }

    #[test]
    fn undecodable_frame() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"garbage").unwrap();
        let f = FrameRef {
            timestep: 0,
            image_path: path.to_string_lossy().into_owned(),
            width: 1,
            height: 1,
        };
        assert!(matches!(encode_image(&f, 512), Err(ClientError::FrameDecode { .. })));
    }

    #[test]
    fn backoff_schedule() {
        let base = Duration::from_millis(100);
        assert_eq!(backoff_delay(1, base, 0.0), Duration::from_millis(100));
        assert_eq!(backoff_delay(3, base, 0.0), Duration::from_millis(400));
        assert_eq!(backoff_delay(2, base, 1.0), Duration::from_millis(240));
        assert_eq!(backoff_delay(2, base, -1.0), Duration::from_millis(160));
    }

    #[test]
    fn completions_url() {
        let cfg = EndpointConfig::new("http://localhost:8000/v1", "m").unwrap();
        assert_eq!(cfg.completions_url().as_str(), "http://localhost:8000/v1/chat/completions");
        let cfg = EndpointConfig::new("http://localhost:8000/v1/", "m").unwrap();
        assert_eq!(cfg.completions_url().as_str(), "http://localhost:8000/v1/chat/completions");
        let cfg = EndpointConfig::new("https://x.test/api/chat/completions", "m").unwrap();
        assert_eq!(cfg.completions_url().as_str(), "https://x.test/api/chat/completions");
    }

    #[test]
    fn config_validation_and_defaults() {
        let mut cfg = EndpointConfig::new("http://localhost", "qwen").unwrap();
        assert_eq!(cfg.temperature, 1.0);
        assert_eq!(cfg.image_max_edge, 512);
        assert_eq!(cfg.max_output_tokens, 2048);
        cfg.max_concurrency = 0;
        assert!(cfg.validate().is_err());
        cfg.max_concurrency = 1;
        cfg.temperature = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn response_text_shapes() {
        let ok = json!({"choices": [{"message": {"content": "Frame 1: 5%"}}]});
        assert_eq!(response_text(&ok).unwrap(), "Frame 1: 5%");
        let null = json!({"choices": [{"message": {"content": null}}]});
        assert_eq!(response_text(&null).unwrap(), "");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(response_text(&parts).unwrap(), "ab");
        assert!(matches!(response_text(&json!({"error": "x"})), Err(ClientError::Protocol(_))));
    }

    #[test]
    fn credentials_are_redacted() {
        let key = Credentials::new("sk-very-secret");
        assert!(!format!("{key:?}").contains("secret"));
        let client = VlmClient::new(EndpointConfig::new("http://localhost", "m").unwrap(), Some(key)).unwrap();
        assert!(!format!("{client:?}").contains("secret"));
    }
}
