use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use painpaint::io::{decode_image, decode_mask, encode_image};
use painpaint::service::ServiceInpainter;
use painpaint_core::inpaint::{InpaintError, InpaintRequest, Inpainter, inpaint_checked};
use painpaint_core::{Image, Mask};

#[derive(Clone, Copy)]
enum Behaviour {
    /// Fill the mask with ground truth, return what was asked for.
    Echo,
    /// Return one candidate fewer than requested.
    Short,
    /// Change pixel (0, 0), which is never masked here.
    Tamper,
    /// Never answer.
    Hang,
    Status500,
}

struct Parts {
    image: Vec<u8>,
    mask: Vec<u8>,
    params: serde_json::Value,
    has_reference: bool,
}

fn find(h: &[u8], n: &[u8]) -> Option<usize> {
    h.windows(n.len()).position(|w| w == n)
}

fn read_request(stream: &mut TcpStream) -> Parts {
    let mut reader = BufReader::new(stream);
    let mut content_type = String::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let lower = l.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if lower.starts_with("content-type:") {
            content_type = l["content-type:".len()..].trim().to_string();
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let boundary = format!("--{}", content_type.split("boundary=").nth(1).unwrap());
    let mut parts = std::collections::BTreeMap::new();
    let mut rest = &body[..];
    while let Some(start) = find(rest, boundary.as_bytes()) {
        rest = &rest[start + boundary.len()..];
        if rest.starts_with(b"--") {
            break;
        }
        let head_end = find(rest, b"\r\n\r\n").unwrap();
        let head = String::from_utf8_lossy(&rest[..head_end]).to_string();
        let name = head.split("name=\"").nth(1).unwrap().split('"').next().unwrap().to_string();
        let data_start = head_end + 4;
        let end = find(&rest[data_start..], boundary.as_bytes()).unwrap() + data_start;
        parts.insert(name, rest[data_start..end - 2].to_vec());
        rest = &rest[end..];
    }
    Parts {
        image: parts["image"].clone(),
        mask: parts["mask"].clone(),
        params: serde_json::from_slice(&parts["params"]).unwrap(),
        has_reference: parts.contains_key("reference"),
    }
}

fn truth(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| [0.25 + 0.01 * x as f32, 0.5 - 0.02 * y as f32, 0.75])
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let head = format!("HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
    stream.write_all(head.as_bytes()).unwrap();
    stream.write_all(body.as_bytes()).unwrap();
}

/// Serves `behaviour` on a loopback port. Returns the URL and a request counter.
fn serve(behaviour: Behaviour) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/inpaint", listener.local_addr().unwrap());
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let parts = read_request(&mut stream);
            seen.fetch_add(1, Ordering::SeqCst);
            let image = decode_image(&parts.image).unwrap();
            let mask = decode_mask(&parts.mask).unwrap();
            let n = parts.params["n_candidates"].as_u64().unwrap() as usize;
            assert_eq!(parts.params["steps"], 20);
            assert!(parts.has_reference || n == 1);
            let (w, h) = image.dims();
            let mut filled = image.clone();
            filled.composite_from(&truth(w, h), &mask).unwrap();
            let count = match behaviour {
                Behaviour::Short => n - 1,
                _ => n,
            };
            let candidates: Vec<String> = (0..count)
                .map(|i| {
                    let mut c = filled.clone();
                    if matches!(behaviour, Behaviour::Tamper) && i == 1 {
                        c.set_pixel(0, 0, [1.0, 0.0, 1.0]);
                    }
                    BASE64.encode(encode_image(&c))
                })
                .collect();
            let body = serde_json::json!({ "candidates": candidates }).to_string();
            match behaviour {
                Behaviour::Hang => thread::sleep(Duration::from_secs(5)),
                Behaviour::Status500 => respond(&mut stream, "500 Internal Server Error", "{\"error\":\"boom\"}"),
                _ => respond(&mut stream, "200 OK", &body),
            }
        }
    });
    (url, count)
}

fn request(n: usize) -> InpaintRequest {
    let (w, h) = (16, 12);
    let input = Image::from_fn(w, h, |x, y| [0.1 + 0.037 * x as f32, 0.9 - 0.013 * y as f32, 0.123_456_7]);
    let mask = Mask::from_fn(w, h, |x, y| (4..10).contains(&x) && (3..8).contains(&y));
    InpaintRequest::new(5, input, mask, 42).unwrap().with_candidates(n).with_reference(truth(w, h))
}

#[test]
fn echo_service_round_trip() {
    let (url, count) = serve(Behaviour::Echo);
    let client = ServiceInpainter::new(url, Duration::from_secs(10), 2);
    let req = request(4);
    let out = inpaint_checked(&client, &req).unwrap();
    assert_eq!(out.len(), 4);
    let gt = truth(16, 12);
    for c in &out {
        for p in 0..c.pixel_count() {
            if req.mask.data()[p] {
                let want = gt.pixel_at(p).map(painpaint::io::quantize16);
                assert_eq!(c.pixel_at(p), want);
            } else {
                assert_eq!(c.pixel_at(p), req.image.pixel_at(p));
            }
        }
    }
    assert_eq!(count.load(Ordering::SeqCst), 1);
}

#[test]
fn short_response_is_count_mismatch() {
    let (url, _) = serve(Behaviour::Short);
    let client = ServiceInpainter::new(url, Duration::from_secs(10), 1);
    assert_eq!(client.inpaint(&request(4)), Err(InpaintError::CountMismatch { expected: 4, got: 3 }));
}

#[test]
fn altered_unmasked_pixel_is_rejected() {
    let (url, _) = serve(Behaviour::Tamper);
    let client = ServiceInpainter::new(url, Duration::from_secs(10), 1);
    assert_eq!(client.inpaint(&request(3)), Err(InpaintError::InvariantViolation { candidate: 1, pixel: 0 }));
}

#[test]
fn timeouts_and_failures_map_to_backend_errors() {
    let (url, _) = serve(Behaviour::Hang);
    let client = ServiceInpainter::new(url, Duration::from_millis(300), 1);
    assert_eq!(client.inpaint(&request(2)), Err(InpaintError::Timeout));

    let (url, _) = serve(Behaviour::Status500);
    let client = ServiceInpainter::new(url, Duration::from_secs(10), 1);
    assert!(matches!(client.inpaint(&request(2)), Err(InpaintError::Protocol(m)) if m.contains("500")));

    // Nothing listens on a port we just released.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = ServiceInpainter::new(format!("http://127.0.0.1:{port}/"), Duration::from_secs(5), 1);
    assert!(matches!(client.inpaint(&request(2)), Err(InpaintError::Network(_))));
}

#[test]
fn concurrent_requests_share_the_client() {
    let (url, count) = serve(Behaviour::Echo);
    let client = Arc::new(ServiceInpainter::new(url, Duration::from_secs(10), 2));
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let c = client.clone();
            thread::spawn(move || c.inpaint(&request(2)).map(|v| v.len()))
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), Ok(2));
    }
    assert_eq!(count.load(Ordering::SeqCst), 4);
}
