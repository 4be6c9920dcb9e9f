//! Streaming inference clients.
//!
//! One adapter contract covers every runtime the suite talks to: POST a chat
//! request, consume newline-delimited JSON chunks, timestamp each chunk at
//! receipt. The Ollama-native and Hailo-Ollama runtimes speak the same wire
//! protocol and differ only in default port; the StackFlow slot exists but
//! has no documented protocol and always reports unsupported.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::monotonic_ns;
use crate::error::{Error, Result};
use crate::httpwire::{read_head, ChunkDecoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeKind {
    OllamaNative,
    HailoOllama,
    StackflowStub,
    Mock,
}

impl RuntimeKind {
    pub fn default_port(self) -> u16 {
        match self {
            RuntimeKind::OllamaNative => 11434,
            RuntimeKind::HailoOllama => 8000,
            RuntimeKind::StackflowStub => 10001,
            RuntimeKind::Mock => 11434,
        }
    }

    pub fn default_chat_path(self) -> &'static str {
        "/api/chat"
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuntimeKind::OllamaNative => "ollama_native",
            RuntimeKind::HailoOllama => "hailo_ollama",
            RuntimeKind::StackflowStub => "stackflow_stub",
            RuntimeKind::Mock => "mock",
        }
    }
}

impl std::fmt::Display for RuntimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RuntimeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ollama_native" => Ok(RuntimeKind::OllamaNative),
            "hailo_ollama" => Ok(RuntimeKind::HailoOllama),
            "stackflow_stub" => Ok(RuntimeKind::StackflowStub),
            "mock" => Ok(RuntimeKind::Mock),
            other => Err(Error::validation(
                "runtime_kind",
                format!("unknown runtime kind `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEndpoint {
    pub kind: RuntimeKind,
    pub base_url: String,
    #[serde(default)]
    pub chat_path: Option<String>,
}

impl RuntimeEndpoint {
    pub fn new(kind: RuntimeKind, base_url: impl Into<String>) -> Self {
        RuntimeEndpoint {
            kind,
            base_url: base_url.into(),
            chat_path: None,
        }
    }

    /// Endpoint on localhost at the runtime's conventional port.
    pub fn local_default(kind: RuntimeKind) -> Self {
        RuntimeEndpoint::new(kind, format!("http://127.0.0.1:{}", kind.default_port()))
    }

    pub fn chat_path(&self) -> &str {
        self.chat_path
            .as_deref()
            .unwrap_or_else(|| self.kind.default_chat_path())
    }

    fn host_port(&self) -> Result<(String, u16, String)> {
        let url = url::Url::parse(&self.base_url).map_err(|e| {
            Error::validation("base_url", format!("`{}`: {e}", self.base_url))
        })?;
        if url.scheme() != "http" {
            return Err(Error::validation(
                "base_url",
                format!("only http:// endpoints are supported, got `{}`", url.scheme()),
            ));
        }
        let host = url
            .host_str()
            .ok_or_else(|| Error::validation("base_url", "missing host"))?
            .to_string();
        let port = url.port().unwrap_or_else(|| self.kind.default_port());
        Ok((host.clone(), port, format!("{host}:{port}")))
    }
}

/// Chat request parameters; `stream` is always true in this harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub model_id: String,
    pub prompt: String,
    pub max_new_tokens: u32,
    pub stream: bool,
    #[serde(default)]
    pub decode_params: BTreeMap<String, serde_json::Value>,
}

impl InferenceRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>, max_new_tokens: u32) -> Self {
        InferenceRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            max_new_tokens: max_new_tokens.max(1),
            stream: true,
            decode_params: BTreeMap::new(),
        }
    }

    fn wire_body(&self) -> Vec<u8> {
        let mut options = serde_json::Map::new();
        options.insert("num_predict".into(), self.max_new_tokens.into());
        for (k, v) in &self.decode_params {
            options.insert(k.clone(), v.clone());
        }
        serde_json::to_vec(&serde_json::json!({
            "model": self.model_id,
            "messages": [{ "role": "user", "content": self.prompt }],
            "stream": true,
            "options": options,
        }))
        .expect("request serializes")
    }
}

/// Counters the runtime reports on its terminal chunk. Diagnostics only;
/// client-side counts are authoritative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerCounters {
    pub eval_count: u64,
    pub eval_duration_ns: u64,
}

/// One streamed protocol chunk, stamped at the moment of receipt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub recv_monotonic_ns: u64,
    pub text_fragment: String,
    pub is_final: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_reported: Option<ServerCounters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChatCompletion {
    pub total_events: usize,
    pub transport_ok: bool,
}

/// Transport timeouts. Inter-chunk default is generous: the slowest CPU
/// configurations sit near 7 s per token.
#[derive(Debug, Clone, Copy)]
pub struct Timeouts {
    pub connect: Duration,
    pub inter_chunk: Duration,
    pub health: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            connect: Duration::from_secs(5),
            inter_chunk: Duration::from_secs(120),
            health: Duration::from_secs(2),
        }
    }
}

/// Shape of the NDJSON chunks both Ollama kinds emit; only the subset the
/// harness consumes.
#[derive(Debug, Deserialize)]
struct WireChunk {
    #[serde(default)]
    message: Option<WireMessage>,
    #[serde(default)]
    done: bool,
    #[serde(default)]
    eval_count: Option<u64>,
    #[serde(default)]
    eval_duration: Option<u64>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: String,
}

fn connect(endpoint: &RuntimeEndpoint, timeouts: &Timeouts) -> Result<TcpStream> {
    let (_, _, authority) = endpoint.host_port()?;
    let addrs: Vec<_> = authority
        .to_socket_addrs()
        .map_err(|e| Error::Connect {
            url: endpoint.base_url.clone(),
            message: e.to_string(),
        })?
        .collect();
    let mut last = None;
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeouts.connect) {
            Ok(s) => {
                s.set_nodelay(true).ok();
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Connect {
        url: endpoint.base_url.clone(),
        message: last
            .map(|e| e.to_string())
            .unwrap_or_else(|| "no addresses resolved".into()),
    })
}

fn classify_read_err(e: std::io::Error, url: &str) -> Error {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => Error::Timeout {
            url: url.into(),
            message: "no chunk within the inter-chunk timeout".into(),
        },
        _ => Error::Protocol {
            url: url.into(),
            message: e.to_string(),
        },
    }
}

/// Issues one streaming chat request and forwards every chunk to `sink` in
/// arrival order. Receipt timestamps are taken as raw bytes land, before any
/// JSON parsing.
pub fn chat_stream(
    endpoint: &RuntimeEndpoint,
    request: &InferenceRequest,
    timeouts: &Timeouts,
    sink: &mut dyn FnMut(TokenEvent),
) -> Result<ChatCompletion> {
    if endpoint.kind == RuntimeKind::StackflowStub {
        return Err(Error::UnsupportedRuntime(endpoint.kind.to_string()));
    }
    let url = &endpoint.base_url;
    let (host, port, _) = endpoint.host_port()?;
    let mut stream = connect(endpoint, timeouts)?;
    stream
        .set_read_timeout(Some(timeouts.inter_chunk))
        .map_err(Error::Io)?;

    let body = request.wire_body();
    let head = format!(
        "POST {} HTTP/1.1\r\nHost: {host}:{port}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        endpoint.chat_path(),
        body.len()
    );
    stream
        .write_all(head.as_bytes())
        .and_then(|_| stream.write_all(&body))
        .map_err(|e| Error::Connect {
            url: url.clone(),
            message: format!("request write failed: {e}"),
        })?;

    let resp = read_head(&mut stream).map_err(|e| classify_read_err(e, url))?;
    let status = resp.status();
    if status != 200 {
        let body = read_error_body(&resp.leftover, &mut stream, resp.content_length());
        if status == 404 {
            return Err(Error::ModelNotFound {
                url: url.clone(),
                model: request.model_id.clone(),
                body,
            });
        }
        return Err(Error::Protocol {
            url: url.clone(),
            message: format!("unexpected status {status}: {body}"),
        });
    }

    let chunked = resp.is_chunked();
    let mut decoder = ChunkDecoder::default();
    let mut decoded: Vec<u8> = Vec::new();
    let mut scan_from = 0usize;
    let mut total_events = 0usize;
    let mut saw_final = false;
    let mut last_recv_ns;

    // Leftover bytes read together with the header carry the header's
    // receipt time.
    if chunked {
        decoder
            .feed(&resp.leftover, &mut decoded)
            .map_err(|e| classify_read_err(e, url))?;
    } else {
        decoded.extend_from_slice(&resp.leftover);
    }
    last_recv_ns = monotonic_ns();

    let mut buf = [0u8; 8 * 1024];
    loop {
        // Drain every complete line currently decoded.
        while let Some(nl) = decoded[scan_from..].iter().position(|&b| b == b'\n') {
            let line_end = scan_from + nl;
            let line = String::from_utf8_lossy(&decoded[scan_from..line_end]);
            let line = line.trim();
            let owned = line.to_string();
            scan_from = line_end + 1;
            if owned.is_empty() {
                continue;
            }
            let chunk: WireChunk = serde_json::from_str(&owned).map_err(|e| Error::Protocol {
                url: url.clone(),
                message: format!("malformed chunk `{owned}`: {e}"),
            })?;
            if let Some(err) = chunk.error {
                return Err(Error::Protocol {
                    url: url.clone(),
                    message: format!("runtime error mid-stream: {err}"),
                });
            }
            let server_reported = match (chunk.eval_count, chunk.eval_duration) {
                (Some(c), d) => Some(ServerCounters {
                    eval_count: c,
                    eval_duration_ns: d.unwrap_or(0),
                }),
                _ => None,
            };
            let event = TokenEvent {
                recv_monotonic_ns: last_recv_ns,
                text_fragment: chunk.message.map(|m| m.content).unwrap_or_default(),
                is_final: chunk.done,
                server_reported,
            };
            let is_final = event.is_final;
            sink(event);
            total_events += 1;
            if is_final {
                saw_final = true;
                break;
            }
        }
        if saw_final {
            break;
        }
        if chunked && decoder.is_done() {
            return Err(Error::Protocol {
                url: url.clone(),
                message: "stream ended before a final chunk".into(),
            });
        }
        let n = stream.read(&mut buf).map_err(|e| classify_read_err(e, url))?;
        last_recv_ns = monotonic_ns();
        if n == 0 {
            if scan_from < decoded.len() || !saw_final {
                return Err(Error::Protocol {
                    url: url.clone(),
                    message: "connection closed before a final chunk".into(),
                });
            }
            break;
        }
        if chunked {
            decoder
                .feed(&buf[..n], &mut decoded)
                .map_err(|e| classify_read_err(e, url))?;
        } else {
            decoded.extend_from_slice(&buf[..n]);
        }
    }

    Ok(ChatCompletion {
        total_events,
        transport_ok: true,
    })
}

fn read_error_body(leftover: &[u8], stream: &mut TcpStream, len: Option<usize>) -> String {
    let mut body = leftover.to_vec();
    let cap = len.unwrap_or(4096).min(64 * 1024);
    let mut buf = [0u8; 1024];
    while body.len() < cap {
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => body.extend_from_slice(&buf[..n]),
        }
    }
    String::from_utf8_lossy(&body).trim().to_string()
}

/// True iff the endpoint answers its version route within the health timeout.
pub fn health_check(endpoint: &RuntimeEndpoint, timeouts: &Timeouts) -> bool {
    let Ok((host, port, _)) = endpoint.host_port() else {
        return false;
    };
    let Ok(mut stream) = connect(endpoint, timeouts) else {
        return false;
    };
    if stream.set_read_timeout(Some(timeouts.health)).is_err() {
        return false;
    }
    let req = format!(
        "GET /api/version HTTP/1.1\r\nHost: {host}:{port}\r\nConnection: close\r\n\r\n"
    );
    if stream.write_all(req.as_bytes()).is_err() {
        return false;
    }
    match read_head(&mut stream) {
        Ok(head) => head.status() == 200,
        Err(_) => false,
    }
}
