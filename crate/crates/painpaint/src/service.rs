//! HTTP client for an external inpainting service.
//!
//! The request is a `multipart/form-data` POST with parts `image` (16-bit
//! PNG), `mask` (8-bit PNG), optional `reference` (16-bit PNG) and `params`
//! (JSON: `view`, `n_candidates`, `seed`, `steps`, `prompt`). The service
//! answers with JSON `{"candidates": ["<base64 PNG>", ...]}`.
//!
//! Images travel as 16-bit PNG, so unmasked pixels are compared against the
//! quantized input. After the check the exact input is restored outside the
//! mask.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use painpaint_core::Image;
use painpaint_core::inpaint::{InpaintError, InpaintRequest, Inpainter};
use serde::{Deserialize, Serialize};

use crate::io::{decode_image, encode_image, encode_mask, quantize16};

/// Largest response accepted, in bytes.
const RESPONSE_LIMIT: u64 = 1 << 30;

#[derive(Debug, Serialize)]
struct Params<'a> {
    view: usize,
    n_candidates: usize,
    seed: u64,
    steps: u32,
    prompt: Option<&'a str>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ServiceResponse {
    pub candidates: Vec<String>,
}

/// Counting semaphore bounding requests in flight.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct ServiceInpainter {
    endpoint: String,
    agent: ureq::Agent,
    slots: Slots,
}

impl std::fmt::Debug for ServiceInpainter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceInpainter").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl ServiceInpainter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { endpoint: endpoint.into(), agent, slots: Slots { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() } }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn map_err(e: ureq::Error) -> InpaintError {
    match e {
        ureq::Error::Timeout(_) => InpaintError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => InpaintError::Timeout,
        ureq::Error::StatusCode(code) => InpaintError::Protocol(format!("HTTP status {code}")),
        ureq::Error::BodyExceedsLimit(n) => InpaintError::Protocol(format!("response larger than {n} bytes")),
        ureq::Error::Io(_) | ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => InpaintError::Network(e.to_string()),
        other => InpaintError::Network(other.to_string()),
    }
}

struct Multipart {
    boundary: String,
    body: Vec<u8>,
}

impl Multipart {
    fn new(boundary: String) -> Self {
        Self { boundary, body: Vec::new() }
    }

    fn part(&mut self, name: &str, content_type: &str, filename: Option<&str>, data: &[u8]) {
        let b = &mut self.body;
        b.extend_from_slice(format!("--{}\r\nContent-Disposition: form-data; name=\"{name}\"", self.boundary).as_bytes());
        if let Some(f) = filename {
            b.extend_from_slice(format!("; filename=\"{f}\"").as_bytes());
        }
        b.extend_from_slice(format!("\r\nContent-Type: {content_type}\r\n\r\n").as_bytes());
        b.extend_from_slice(data);
        b.extend_from_slice(b"\r\n");
    }

    fn finish(mut self) -> (String, Vec<u8>) {
        self.body.extend_from_slice(format!("--{}--\r\n", self.boundary).as_bytes());
        (format!("multipart/form-data; boundary={}", self.boundary), self.body)
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Encodes `request` as the multipart body. Returns the content type and body.
pub fn encode_request(request: &InpaintRequest) -> (String, Vec<u8>) {
    let image = encode_image(&request.image);
    let mask = encode_mask(&request.mask);
    let reference = request.reference.as_ref().map(encode_image);
    let params = serde_json::to_vec(&Params {
        view: request.view,
        n_candidates: request.n_candidates,
        seed: request.seed,
        steps: request.steps,
        prompt: request.prompt.as_deref(),
    })
    .expect("params serialize");
    let mut salt = request.seed;
    let boundary = loop {
        let b = format!("painpaint-{salt:016x}");
        let clash = [Some(&image), Some(&mask), reference.as_ref(), Some(&params)].into_iter().flatten().any(|p| contains(p, b.as_bytes()));
        if !clash {
            break b;
        }
        salt = salt.wrapping_add(0x9E37_79B9_7F4A_7C15);
    };
    let mut form = Multipart::new(boundary);
    form.part("image", "image/png", Some("image.png"), &image);
    form.part("mask", "image/png", Some("mask.png"), &mask);
    if let Some(r) = &reference {
        form.part("reference", "image/png", Some("reference.png"), r);
    }
    form.part("params", "application/json", None, &params);
    form.finish()
}

/// Decodes a service response, checks count and unmasked pixels, and
/// restores the exact input outside the mask.
pub fn decode_response(request: &InpaintRequest, body: &str) -> Result<Vec<Image>, InpaintError> {
    let resp: ServiceResponse = serde_json::from_str(body).map_err(|e| InpaintError::Protocol(format!("bad response JSON: {e}")))?;
    if resp.candidates.len() != request.n_candidates {
        return Err(InpaintError::CountMismatch { expected: request.n_candidates, got: resp.candidates.len() });
    }
    let input = request.image.data();
    let mask = request.mask.data();
    resp.candidates
        .iter()
        .enumerate()
        .map(|(i, b64)| {
            let png = BASE64.decode(b64.trim()).map_err(|e| InpaintError::Protocol(format!("candidate {i}: {e}")))?;
            let img = decode_image(&png).map_err(|e| InpaintError::Protocol(format!("candidate {i}: {e}")))?;
            if img.dims() != request.image.dims() {
                let ((w, h), (ew, eh)) = (img.dims(), request.image.dims());
                return Err(InpaintError::Protocol(format!("candidate {i} is {w}x{h}, expected {ew}x{eh}")));
            }
            let mut data = img.data().to_vec();
            for (p, &m) in mask.iter().enumerate() {
                if m {
                    continue;
                }
                for c in 0..3 {
                    let k = p * 3 + c;
                    if data[k] != quantize16(input[k]) {
                        return Err(InpaintError::InvariantViolation { candidate: i, pixel: p });
                    }
                    data[k] = input[k];
                }
            }
            Ok(Image::new(img.width(), img.height(), data).expect("same dims"))
        })
        .collect()
}

impl Inpainter for ServiceInpainter {
    fn inpaint(&self, request: &InpaintRequest) -> Result<Vec<Image>, InpaintError> {
        request.validate()?;
        let (content_type, body) = encode_request(request);
        let _permit = self.slots.acquire();
        let mut resp = self.agent.post(&self.endpoint).header("Content-Type", &content_type).send(&body[..]).map_err(map_err)?;
        let status = resp.status();
        let text = resp.body_mut().with_config().limit(RESPONSE_LIMIT).read_to_string().map_err(map_err)?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(InpaintError::Protocol(format!("HTTP status {}: {snippet}", status.as_u16())));
        }
        decode_response(request, &text)
    }
}
