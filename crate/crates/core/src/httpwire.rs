//! Minimal HTTP/1.1 plumbing shared by the streaming client and the mock
//! server. A full HTTP stack is deliberately avoided on the client side: the
//! harness needs a receipt timestamp per raw read and a per-chunk read
//! timeout, both of which sit below the abstraction level of the usual
//! client crates.

use std::collections::HashMap;
use std::io::Read;

/// Parsed head of an HTTP message (request or response).
#[derive(Debug)]
pub struct Head {
    /// Request line or status line, verbatim.
    pub start_line: String,
    pub headers: HashMap<String, String>,
    /// Body bytes already consumed while scanning for the blank line.
    pub leftover: Vec<u8>,
}

impl Head {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(|s| s.as_str())
    }

    pub fn content_length(&self) -> Option<usize> {
        self.header("content-length").and_then(|v| v.trim().parse().ok())
    }

    pub fn is_chunked(&self) -> bool {
        self.header("transfer-encoding")
            .map(|v| v.to_ascii_lowercase().contains("chunked"))
            .unwrap_or(false)
    }

    /// Status code for a response head, 0 if unparsable.
    pub fn status(&self) -> u16 {
        self.start_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    }
}

/// Reads from `r` until the header/body separator, then parses the head.
pub fn read_head(r: &mut impl Read) -> std::io::Result<Head> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 1024];
    let split = loop {
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos;
        }
        if buf.len() > 64 * 1024 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "header block exceeds 64 KiB",
            ));
        }
        let n = r.read(&mut chunk)?;
        if n == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before header end",
            ));
        }
        buf.extend_from_slice(&chunk[..n]);
    };

    let head_text = String::from_utf8_lossy(&buf[..split]).into_owned();
    let leftover = buf[split + 4..].to_vec();
    let mut lines = head_text.split("\r\n");
    let start_line = lines.next().unwrap_or_default().to_string();
    let mut headers = HashMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    Ok(Head {
        start_line,
        headers,
        leftover,
    })
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|w| w == needle)
}

/// Incremental decoder for `Transfer-Encoding: chunked` bodies.
#[derive(Debug)]
pub struct ChunkDecoder {
    state: ChunkState,
    size_line: Vec<u8>,
    remaining: usize,
}

#[derive(Debug, PartialEq)]
enum ChunkState {
    Size,
    Data,
    DataCrLf(u8),
    TrailerCrLf(u8),
    Done,
}

impl Default for ChunkDecoder {
    fn default() -> Self {
        ChunkDecoder {
            state: ChunkState::Size,
            size_line: Vec::new(),
            remaining: 0,
        }
    }
}

impl ChunkDecoder {
    pub fn is_done(&self) -> bool {
        self.state == ChunkState::Done
    }

    /// Feeds raw bytes; appends decoded payload bytes to `out`.
    /// Returns true once the terminal chunk has been fully consumed.
    pub fn feed(&mut self, input: &[u8], out: &mut Vec<u8>) -> std::io::Result<bool> {
        let mut i = 0;
        while i < input.len() {
            match self.state {
                ChunkState::Size => {
                    let b = input[i];
                    i += 1;
                    if b == b'\n' {
                        let line = String::from_utf8_lossy(&self.size_line);
                        let line = line.trim_end_matches('\r');
                        let size_part = line.split(';').next().unwrap_or("").trim();
                        let size = usize::from_str_radix(size_part, 16).map_err(|_| {
                            std::io::Error::new(
                                std::io::ErrorKind::InvalidData,
                                format!("bad chunk size line: {line:?}"),
                            )
                        })?;
                        self.size_line.clear();
                        if size == 0 {
                            self.state = ChunkState::TrailerCrLf(0);
                        } else {
                            self.remaining = size;
                            self.state = ChunkState::Data;
                        }
                    } else {
                        self.size_line.push(b);
                        if self.size_line.len() > 32 {
                            return Err(std::io::Error::new(
                                std::io::ErrorKind::InvalidData,
                                "oversized chunk size line",
                            ));
                        }
                    }
                }
                ChunkState::Data => {
                    let take = self.remaining.min(input.len() - i);
                    out.extend_from_slice(&input[i..i + take]);
                    self.remaining -= take;
                    i += take;
                    if self.remaining == 0 {
                        self.state = ChunkState::DataCrLf(0);
                    }
                }
                ChunkState::DataCrLf(seen) => {
                    // swallow the CRLF after chunk data
                    i += 1;
                    if seen == 1 {
                        self.state = ChunkState::Size;
                    } else {
                        self.state = ChunkState::DataCrLf(1);
                    }
                }
                ChunkState::TrailerCrLf(seen) => {
                    i += 1;
                    if seen == 1 {
                        self.state = ChunkState::Done;
                    } else {
                        self.state = ChunkState::TrailerCrLf(1);
                    }
                }
                ChunkState::Done => break,
            }
        }
        Ok(self.is_done())
    }
}

/// Chunked-encodes one payload slice.
pub fn encode_chunk(payload: &[u8]) -> Vec<u8> {
    let mut out = format!("{:x}\r\n", payload.len()).into_bytes();
    out.extend_from_slice(payload);
    out.extend_from_slice(b"\r\n");
    out
}

pub const TERMINAL_CHUNK: &[u8] = b"0\r\n\r\n";
