//! Deterministic Ollama-wire mock server.
//!
//! Serves the same chat protocol the adapters consume, with configurable
//! TTFT, token rate, first-request load latency, seeded jitter and
//! mid-stream fault injection. Token gaps are scheduled against absolute
//! deadlines so that long streams do not accumulate sleep drift.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::httpwire::{encode_chunk, read_head, TERMINAL_CHUNK};

/// Timing profile for one mock model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub model_id: String,
    #[serde(default)]
    pub ttft_ms: f64,
    pub tokens_per_s: f64,
    /// Extra delay added once, on the first request for this model. A
    /// correct harness hides it behind warmup.
    #[serde(default)]
    pub first_request_load_ms: f64,
    /// Uniform per-gap jitter in percent of the nominal gap.
    #[serde(default)]
    pub jitter_pct: f64,
    #[serde(default)]
    pub jitter_seed: u64,
    /// Drop the connection after this many tokens, without a final chunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_after_tokens: Option<u32>,
    /// Hard cap on emitted tokens regardless of num_predict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl MockProfile {
    pub fn new(model_id: impl Into<String>, ttft_ms: f64, tokens_per_s: f64) -> Self {
        MockProfile {
            model_id: model_id.into(),
            ttft_ms,
            tokens_per_s,
            first_request_load_ms: 0.0,
            jitter_pct: 0.0,
            jitter_seed: 0,
            fail_after_tokens: None,
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tokens_per_s > 0.0) {
            return Err(Error::validation(
                format!("profile[{}].tokens_per_s", self.model_id),
                "must be strictly positive",
            ));
        }
        if self.ttft_ms < 0.0 || self.first_request_load_ms < 0.0 {
            return Err(Error::validation(
                format!("profile[{}]", self.model_id),
                "delays must be nonnegative",
            ));
        }
        if !(0.0..100.0).contains(&self.jitter_pct) {
            return Err(Error::validation(
                format!("profile[{}].jitter_pct", self.model_id),
                "must be in [0, 100)",
            ));
        }
        Ok(())
    }
}

/// Profile file: `[[profile]]` tables in the catalog format family.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockProfileSet {
    #[serde(default, rename = "profile")]
    pub profiles: Vec<MockProfile>,
}

impl MockProfileSet {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let set: MockProfileSet = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.message().to_string(),
        })?;
        for p in &set.profiles {
            p.validate()?;
        }
        Ok(set)
    }
}

struct ServerState {
    profiles: Vec<MockProfile>,
    /// Models that have already paid their first-request load delay.
    loaded: Mutex<HashSet<String>>,
}

/// Running mock server; shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds and serves in a background thread. `bind` may use port 0 to let the
/// OS pick; query `addr()` for the actual port.
pub fn serve(profiles: Vec<MockProfile>, bind: &str) -> Result<MockServer> {
    for p in &profiles {
        p.validate()?;
    }
    let listener = TcpListener::bind(bind).map_err(|e| Error::Bind {
        addr: bind.to_string(),
        message: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(Error::Io)?;
    let stop = Arc::new(AtomicBool::new(false));
    let state = Arc::new(ServerState {
        profiles,
        loaded: Mutex::new(HashSet::new()),
    });

    let stop2 = Arc::clone(&stop);
    let handle = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if stop2.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &state);
            });
        }
    });

    Ok(MockServer {
        addr,
        stop,
        handle: Some(handle),
    })
}

fn handle_connection(mut stream: TcpStream, state: &ServerState) -> std::io::Result<()> {
    stream.set_nodelay(true).ok();
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok();
    let head = read_head(&mut stream)?;
    let mut parts = head.start_line.split_whitespace();
    let method = parts.next().unwrap_or("");
    let path = parts.next().unwrap_or("");

    match (method, path) {
        ("GET", "/api/version") => {
            write_simple(&mut stream, 200, r#"{"version":"0.0.0-mock"}"#)
        }
        ("POST", "/api/chat") => {
            let body = read_body(&mut stream, &head)?;
            handle_chat(stream, state, &body)
        }
        _ => write_simple(&mut stream, 404, r#"{"error":"unknown route"}"#),
    }
}

fn read_body(stream: &mut TcpStream, head: &crate::httpwire::Head) -> std::io::Result<Vec<u8>> {
    let len = head.content_length().unwrap_or(0);
    let mut body = head.leftover.clone();
    let mut buf = [0u8; 4096];
    while body.len() < len {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&buf[..n]);
    }
    Ok(body)
}

#[derive(Deserialize)]
struct ChatRequest {
    model: String,
    #[serde(default)]
    options: ChatOptions,
}

#[derive(Deserialize, Default)]
struct ChatOptions {
    #[serde(default)]
    num_predict: Option<u32>,
}

fn handle_chat(mut stream: TcpStream, state: &ServerState, body: &[u8]) -> std::io::Result<()> {
    let req: ChatRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => {
            return write_simple(&mut stream, 400, &format!(r#"{{"error":"bad request: {e}"}}"#))
        }
    };
    let Some(profile) = state
        .profiles
        .iter()
        .find(|p| p.model_id == req.model)
        .cloned()
    else {
        return write_simple(
            &mut stream,
            404,
            &format!(r#"{{"error":"model '{}' not found"}}"#, req.model),
        );
    };

    let requested = req.options.num_predict.unwrap_or(100).max(1);
    let n_tokens = profile.max_tokens.map_or(requested, |cap| requested.min(cap));

    let first_request = state.loaded.lock().unwrap().insert(profile.model_id.clone());
    let load = if first_request {
        Duration::from_secs_f64(profile.first_request_load_ms / 1000.0)
    } else {
        Duration::ZERO
    };

    stream.write_all(
        b"HTTP/1.1 200 OK\r\nContent-Type: application/x-ndjson\r\nTransfer-Encoding: chunked\r\nConnection: close\r\n\r\n",
    )?;
    stream.flush()?;

    let start = Instant::now();
    let nominal_gap = 1.0 / profile.tokens_per_s;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.jitter_seed);
    let mut offset_s = load.as_secs_f64() + profile.ttft_ms / 1000.0;

    for k in 0..n_tokens {
        if let Some(limit) = profile.fail_after_tokens {
            if k >= limit {
                // fault injection: vanish without a final chunk
                let _ = stream.shutdown(std::net::Shutdown::Both);
                return Ok(());
            }
        }
        sleep_until(start + Duration::from_secs_f64(offset_s));
        let line = serde_json::json!({
            "model": profile.model_id,
            "message": { "role": "assistant", "content": format!("tok{k}") },
            "done": false,
        });
        let payload = format!("{line}\n");
        stream.write_all(&encode_chunk(payload.as_bytes()))?;
        stream.flush()?;
        let jitter = if profile.jitter_pct > 0.0 {
            1.0 + rng.gen_range(-profile.jitter_pct..profile.jitter_pct) / 100.0
        } else {
            1.0
        };
        offset_s += nominal_gap * jitter;
    }

    let eval_duration_ns = ((n_tokens.saturating_sub(1)) as f64 * nominal_gap * 1e9) as u64;
    let final_line = serde_json::json!({
        "model": profile.model_id,
        "message": { "role": "assistant", "content": "" },
        "done": true,
        "eval_count": n_tokens,
        "eval_duration": eval_duration_ns,
    });
    let payload = format!("{final_line}\n");
    stream.write_all(&encode_chunk(payload.as_bytes()))?;
    stream.write_all(TERMINAL_CHUNK)?;
    stream.flush()?;
    Ok(())
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        std::thread::sleep(deadline - now);
    }
}

fn write_simple(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Error",
    };
    let resp = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(resp.as_bytes())
}
