//! Minimal instrumented HTTP server that mimics an embedding endpoint.
//! Deterministic vectors, plus injectable failures, latency, and dimension
//! drift, so client behaviour (retries, concurrency caps, validation) can
//! be asserted without a real backend.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone)]
pub struct StubOptions {
    /// Embedding dimension of normal responses.
    pub dims: usize,
    /// Artificial latency per request, to make concurrency observable.
    pub delay: Duration,
    /// The first `fail_first` requests answer 500 before the server recovers.
    pub fail_first: usize,
    /// After this many successful responses, vectors grow by 16 components.
    pub drift_after: Option<usize>,
    /// Expected bearer token; requests without it answer 401.
    pub require_token: Option<String>,
}

impl Default for StubOptions {
    fn default() -> Self {
        StubOptions {
            dims: 8,
            delay: Duration::from_millis(0),
            fail_first: 0,
            drift_after: None,
            require_token: None,
        }
    }
}

struct StubState {
    opts: StubOptions,
    running: AtomicBool,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    requests: AtomicUsize,
    successes: AtomicUsize,
}

pub struct StubServer {
    addr: String,
    state: Arc<StubState>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(opts: StubOptions) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub listener");
        let addr = format!("http://{}/embed", listener.local_addr().unwrap());
        let state = Arc::new(StubState {
            opts,
            running: AtomicBool::new(true),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
            successes: AtomicUsize::new(0),
        });
        let accept_state = Arc::clone(&state);
        let handle = std::thread::spawn(move || {
            let mut workers = Vec::new();
            for stream in listener.incoming() {
                if !accept_state.running.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let st = Arc::clone(&accept_state);
                workers.push(std::thread::spawn(move || handle_connection(stream, &st)));
            }
            for w in workers {
                let _ = w.join();
            }
        });
        StubServer { addr, state, handle: Some(handle) }
    }

    /// Endpoint URL to point the client at.
    pub fn url(&self) -> String {
        self.addr.clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    /// Highest number of requests that were ever being served at once.
    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.state.running.store(false, Ordering::SeqCst);
        // Unblock accept() so the listener thread can observe the flag.
        let host = self.addr.trim_start_matches("http://").trim_end_matches("/embed");
        let _ = TcpStream::connect(host);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: &StubState) {
    let Some((headers, body)) = read_request(&mut stream) else { return };
    if body.is_empty() {
        // Wake-up connection from Drop, or a bodyless probe.
        return;
    }

    let n = state.requests.fetch_add(1, Ordering::SeqCst) + 1;
    let cur = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(cur, Ordering::SeqCst);
    if !state.opts.delay.is_zero() {
        std::thread::sleep(state.opts.delay);
    }

    let response = respond(state, n, &headers, &body);
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
}

fn respond(state: &StubState, request_no: usize, headers: &str, body: &str) -> String {
    if let Some(expected) = &state.opts.require_token {
        let want = format!("authorization: bearer {}", expected.to_lowercase());
        let got = headers.to_lowercase();
        if !got.contains(&want) {
            return http_response(401, r#"{"error":"missing or bad token"}"#);
        }
    }
    if request_no <= state.opts.fail_first {
        return http_response(500, r#"{"error":"transient"}"#);
    }

    let parsed: serde_json::Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) => return http_response(400, r#"{"error":"bad json"}"#),
    };

    let served = state.successes.fetch_add(1, Ordering::SeqCst);
    let mut dims = state.opts.dims;
    if let Some(limit) = state.opts.drift_after {
        if served >= limit {
            dims += 16;
        }
    }

    // Single-prompt shape: {"model", "messages": [...]} -> {"embedding": [...]}.
    if let Some(messages) = parsed.get("messages").and_then(|m| m.as_array()) {
        let question = messages
            .last()
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .unwrap_or("");
        let body = serde_json::json!({ "embedding": vector_for(question, dims) });
        return http_response(200, &body.to_string());
    }

    // Batch shape: {"model", "input": [...]} -> {"data": [{"embedding": [...]}]}.
    if let Some(input) = parsed.get("input").and_then(|i| i.as_array()) {
        let data: Vec<serde_json::Value> = input
            .iter()
            .map(|q| {
                let question = q.as_str().unwrap_or("");
                serde_json::json!({ "embedding": vector_for(question, dims) })
            })
            .collect();
        let body = serde_json::json!({ "data": data });
        return http_response(200, &body.to_string());
    }

    http_response(400, r#"{"error":"unrecognized request shape"}"#)
}

fn http_response(status: u16, body: &str) -> String {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        _ => "Internal Server Error",
    };
    format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String)> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            // Connection closed before a full header arrived (wake-up ping).
            return if buf.is_empty() { Some((String::new(), String::new())) } else { None };
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);

    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body = String::from_utf8_lossy(&buf[body_start..body_start + content_length]).to_string();
    Some((headers, body))
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

/// Deterministic embedding for a question. Questions with a "topic<k>:"
/// prefix cluster tightly around a per-topic center; anything else gets an
/// unstructured vector derived from the full text.
pub fn vector_for(question: &str, dims: usize) -> Vec<f64> {
    let topic = question
        .strip_prefix("topic")
        .and_then(|rest| rest.split_once(':'))
        .and_then(|(k, _)| k.parse::<u64>().ok());

    match topic {
        Some(t) => {
            let mut center_rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ t.wrapping_mul(0x9E37));
            let center: Vec<f64> = (0..dims).map(|_| center_rng.gen_range(-10.0..=10.0)).collect();
            let mut noise_rng = ChaCha8Rng::seed_from_u64(text_seed(question));
            center.iter().map(|&c| c + noise_rng.gen_range(-0.05..=0.05)).collect()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(text_seed(question));
            (0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        }
    }
}

fn text_seed(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
