//! Minimal canned-response HTTP server used as the tool and completion
//! endpoint in tests and offline reproductions.
//!
//! Responses are keyed by the exact request target ("/path?query"). A key
//! may map to a single response or to a sequence served in order (the last
//! entry repeats once the sequence is exhausted). Unknown targets return
//! 404. Every request is recorded and can be inspected afterwards.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

#[derive(Debug, Clone)]
pub struct CannedResponse {
    pub status: u16,
    pub body: String,
}

impl CannedResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }

    pub fn with_status(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
        }
    }
}

/// One request the server has seen.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub target: String,
    pub body: Option<String>,
}

struct Fixture {
    responses: Vec<CannedResponse>,
    served: usize,
}

struct Shared {
    fixtures: Mutex<HashMap<String, Fixture>>,
    requests: Mutex<Vec<RecordedRequest>>,
    stop: AtomicBool,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(
        fixtures: impl IntoIterator<Item = (String, Vec<CannedResponse>)>,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            fixtures: Mutex::new(
                fixtures
                    .into_iter()
                    .map(|(target, responses)| {
                        (target, Fixture { responses, served: 0 })
                    })
                    .collect(),
            ),
            requests: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = Arc::clone(&shared);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let _ = handle_connection(stream, &worker);
                }
            }
        });
        Ok(Self {
            addr,
            shared,
            handle: Some(handle),
        })
    }

    /// Load fixtures from a JSON file: a map from request target to either
    /// a body string, a {"status", "body"} object, or an array of those.
    pub fn start_from_file(path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let fixtures = parse_fixtures(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Self::start(fixtures)
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Full URL for a request target such as "/api?q=x".
    pub fn url_for(&self, target: &str) -> String {
        format!("http://{}{}", self.addr, target)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.lock().unwrap().len()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

pub fn parse_fixtures(
    raw: &str,
) -> Result<Vec<(String, Vec<CannedResponse>)>, String> {
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| format!("fixtures file is not JSON: {e}"))?;
    let map = value
        .as_object()
        .ok_or_else(|| "fixtures file must be a JSON object".to_string())?;
    let mut out = Vec::new();
    for (target, entry) in map {
        let responses = match entry {
            serde_json::Value::Array(items) => items
                .iter()
                .map(parse_one_response)
                .collect::<Result<Vec<_>, _>>()?,
            single => vec![parse_one_response(single)?],
        };
        out.push((target.clone(), responses));
    }
    Ok(out)
}

fn parse_one_response(value: &serde_json::Value) -> Result<CannedResponse, String> {
    match value {
        serde_json::Value::String(body) => Ok(CannedResponse::ok(body.clone())),
        serde_json::Value::Object(fields) => {
            let status = fields
                .get("status")
                .and_then(|s| s.as_u64())
                .unwrap_or(200) as u16;
            let body = fields
                .get("body")
                .and_then(|b| b.as_str())
                .unwrap_or_default()
                .to_string();
            Ok(CannedResponse { status, body })
        }
        other => Err(format!("unsupported fixture entry: {other}")),
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream);

    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default().to_string();
    if method.is_empty() || target.is_empty() {
        return Ok(());
    }

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }

    let body = if content_length > 0 {
        let mut buf = vec![0u8; content_length];
        reader.read_exact(&mut buf)?;
        Some(String::from_utf8_lossy(&buf).into_owned())
    } else {
        None
    };

    shared.requests.lock().unwrap().push(RecordedRequest {
        method: method.clone(),
        target: target.clone(),
        body,
    });

    let response = {
        let mut fixtures = shared.fixtures.lock().unwrap();
        match fixtures.get_mut(&target) {
            Some(fixture) if !fixture.responses.is_empty() => {
                let index = fixture.served.min(fixture.responses.len() - 1);
                fixture.served += 1;
                fixture.responses[index].clone()
            }
            _ => CannedResponse::with_status(404, ""),
        }
    };

    let reason = match response.status {
        200 => "OK",
        404 => "Not Found",
        500 => "Internal Server Error",
        _ => "Status",
    };
    let payload = format!(
        "HTTP/1.1 {} {}\r\ncontent-length: {}\r\ncontent-type: text/plain; charset=utf-8\r\nconnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    );
    let mut stream = reader.into_inner();
    stream.write_all(payload.as_bytes())?;
    stream.flush()
}
