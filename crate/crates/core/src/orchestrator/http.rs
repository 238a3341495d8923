//! Client for the inpainting wire protocol: `POST /inpaint`, `GET /health`.

use std::io::Read;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::audit::AuditLog;
use super::backend::{Backend, BackendError, InpaintRequest, InpaintResponse};
use crate::conditioning::ScaleVector;
use crate::image::RasterImage;

/// JSON body of `POST /inpaint`. Rasters are base64-encoded PNGs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintPayload {
    pub image: String,
    pub mask: String,
    pub canny: String,
    pub pose: String,
    pub seg: String,
    pub reference: String,
    pub prompt: String,
    pub negative_prompt: String,
    pub scales: ScaleVector,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

/// Successful `POST /inpaint` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintReply {
    pub image: String,
    pub seed: u64,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

/// `GET /health` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReply {
    pub status: String,
    pub model: String,
}

fn b64_png(bytes: crate::Result<Vec<u8>>) -> Result<String, BackendError> {
    bytes
        .map(|b| STANDARD.encode(b))
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))
}

pub fn encode_request(request: &InpaintRequest<'_>) -> Result<InpaintPayload, BackendError> {
    request.validate()?;
    let b = request.bundle;
    let (width, height) = request.dims();
    Ok(InpaintPayload {
        image: b64_png(request.image.encode_png())?,
        mask: b64_png(b.mask.encode_png())?,
        canny: b64_png(b.canny.encode_png())?,
        pose: b64_png(b.pose.encode_png())?,
        seg: b64_png(b.segmentation.encode_png())?,
        reference: b64_png(b.reference.encode_png())?,
        prompt: b.prompt.clone(),
        negative_prompt: b.negative_prompt.clone(),
        scales: b.scales,
        seed: request.seed,
        width,
        height,
    })
}

/// Decodes a base64 PNG from a payload field.
pub fn decode_image_field(field: &str, value: &str) -> Result<RasterImage, BackendError> {
    let bytes = STANDARD
        .decode(value)
        .map_err(|e| BackendError::MalformedPayload(format!("{field}: invalid base64: {e}")))?;
    RasterImage::decode_png(&bytes).map_err(|e| BackendError::MalformedPayload(format!("{field}: {e}")))
}

/// Parses and validates a `200` reply body against its request.
pub fn decode_response(body: &[u8], request: &InpaintRequest<'_>, latency_ms: u64) -> Result<InpaintResponse, BackendError> {
    let reply: InpaintReply =
        serde_json::from_slice(body).map_err(|e| BackendError::MalformedPayload(format!("response body: {e}")))?;
    let image = decode_image_field("image", &reply.image)?;
    request.check_response(&image)?;
    Ok(InpaintResponse {
        image,
        seed: reply.seed,
        backend: reply.backend,
        latency_ms,
    })
}

fn remote_error(status: u16, body: &[u8]) -> BackendError {
    let message = match serde_json::from_slice::<ErrorReply>(body) {
        Ok(e) => e.error,
        Err(_) => String::from_utf8_lossy(body).into_owned(),
    };
    BackendError::Remote { status, message }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(t);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = e.source();
    }
    t.to_string().contains("timed out")
}

fn read_body(resp: ureq::Response) -> std::io::Result<Vec<u8>> {
    let mut body = Vec::new();
    resp.into_reader().take(256 << 20).read_to_end(&mut body)?;
    Ok(body)
}

enum Attempt {
    Done(u16, Vec<u8>),
    Retry(BackendError),
}

/// HTTP client with exponential backoff on transport failures.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32, backoff: Duration) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            retries,
            backoff,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn send(&self, url: &str, body: Option<&[u8]>) -> Attempt {
        let result = match body {
            Some(b) => self
                .agent
                .post(url)
                .set("Content-Type", "application/json")
                .send_bytes(b),
            None => self.agent.get(url).call(),
        };
        let read = |status: u16, resp: ureq::Response| match read_body(resp) {
            Ok(b) => Attempt::Done(status, b),
            Err(e) => Attempt::Retry(BackendError::Transport {
                attempts: 0,
                message: format!("reading response: {e}"),
            }),
        };
        match result {
            Ok(resp) => read(resp.status(), resp),
            Err(ureq::Error::Status(code, resp)) => read(code, resp),
            Err(ureq::Error::Transport(t)) => Attempt::Retry(if is_timeout(&t) {
                BackendError::Timeout {
                    attempts: 0,
                    message: t.to_string(),
                }
            } else {
                BackendError::Transport {
                    attempts: 0,
                    message: t.to_string(),
                }
            }),
        }
    }

    /// Sends with retries; returns the status and body of the first
    /// response that arrives.
    fn exchange(&self, path: &str, body: Option<&[u8]>, audit: &mut AuditLog) -> Result<(u16, Vec<u8>), BackendError> {
        let url = format!("{}{}", self.endpoint, path);
        let total = self.retries + 1;
        let mut last = None;
        for attempt in 1..=total {
            if attempt > 1 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 2));
            }
            let start = Instant::now();
            match self.send(&url, body) {
                Attempt::Done(status, bytes) => {
                    audit.record_timed("backend.attempt", format!("{path} attempt {attempt}/{total}: HTTP {status}"), start);
                    return Ok((status, bytes));
                }
                Attempt::Retry(e) => {
                    audit.record_timed("backend.attempt", format!("{path} attempt {attempt}/{total}: {e}"), start);
                    last = Some(e);
                }
            }
        }
        Err(match last.expect("at least one attempt") {
            BackendError::Timeout { message, .. } => BackendError::Timeout {
                attempts: total,
                message,
            },
            BackendError::Transport { message, .. } => BackendError::Transport {
                attempts: total,
                message,
            },
            other => other,
        })
    }

    pub fn health(&self, audit: &mut AuditLog) -> Result<HealthReply, BackendError> {
        let (status, body) = self.exchange("/health", None, audit)?;
        if status != 200 {
            return Err(remote_error(status, &body));
        }
        let reply: HealthReply =
            serde_json::from_slice(&body).map_err(|e| BackendError::MalformedPayload(format!("health body: {e}")))?;
        if reply.status != "ok" {
            return Err(BackendError::Remote {
                status,
                message: format!("backend status {:?}", reply.status),
            });
        }
        Ok(reply)
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn inpaint(&self, request: &InpaintRequest<'_>, audit: &mut AuditLog) -> Result<InpaintResponse, BackendError> {
        let payload = encode_request(request)?;
        let body = serde_json::to_vec(&payload).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let start = Instant::now();
        let (status, bytes) = self.exchange("/inpaint", Some(&body), audit)?;
        if status != 200 {
            return Err(remote_error(status, &bytes));
        }
        decode_response(&bytes, request, start.elapsed().as_millis() as u64)
    }
}
