//! Clients for detectors living outside this process.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::protocol::{parse_response, PredictRequest};
use super::{Detector, OracleError, Query};
use crate::generator::encode_png;
use crate::metrics::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    /// Extra attempts after a connection failure or timeout.
    pub retries: u32,
    /// Always send PNG bytes, even when the image exists on disk.
    pub inline: bool,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            timeout_ms: 30_000,
            max_in_flight: 4,
            retries: 2,
            inline: false,
        }
    }
}

impl ExternalConfig {
    fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms.max(1))
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

fn build_request(query: &Query<'_>, inline: bool) -> PredictRequest {
    let path = query.image_path.filter(|_| !inline);
    PredictRequest {
        image_id: query.image_id.to_string(),
        image_path: path.map(|p| p.display().to_string()),
        image_b64: path
            .is_none()
            .then(|| base64::engine::general_purpose::STANDARD.encode(encode_png(&query.image.pixels))),
    }
}

/// Runs `attempt` until it succeeds, fails permanently, or retries run out.
fn with_retries<T>(
    retries: u32,
    image_id: &str,
    mut attempt: impl FnMut() -> Result<T, OracleError>,
) -> Result<T, OracleError> {
    let mut n = 0;
    loop {
        match attempt() {
            Err(e) if e.is_transient() && n < retries => {
                n += 1;
                log::warn!("retrying {image_id} ({n}/{retries}): {e}");
            }
            other => return other,
        }
    }
}

/// POSTs one JSON request line per image.
pub struct HttpClient {
    url: String,
    agent: ureq::Agent,
    config: ExternalConfig,
    permits: Permits,
}

impl HttpClient {
    pub fn new(url: &str, config: ExternalConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(true)
            .build()
            .into();
        HttpClient {
            url: url.to_string(),
            agent,
            permits: Permits::new(config.max_in_flight),
            config,
        }
    }

    fn post(&self, line: &str) -> Result<String, OracleError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/x-ndjson")
            .send(line)
            .map_err(map_ureq)?;
        resp.body_mut().read_to_string().map_err(map_ureq)
    }
}

fn map_ureq(e: ureq::Error) -> OracleError {
    use std::io::ErrorKind;
    match e {
        ureq::Error::Timeout(t) => OracleError::Timeout(t.to_string()),
        ureq::Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            OracleError::Timeout(io.to_string())
        }
        ureq::Error::Io(io) => OracleError::Connection(io.to_string()),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            OracleError::Connection(e.to_string())
        }
        ureq::Error::StatusCode(code) => OracleError::Protocol(format!("HTTP status {code}")),
        other => OracleError::Protocol(other.to_string()),
    }
}

impl Detector for HttpClient {
    fn predict(&self, query: &Query<'_>) -> Result<Vec<Detection>, OracleError> {
        let _permit = self.permits.acquire();
        let line = build_request(query, self.config.inline).to_line();
        with_retries(self.config.retries, query.image_id, || {
            let text = self.post(&line)?;
            parse_response(&text, query.image_id)
        })
    }
}

type Pending = Arc<Mutex<HashMap<String, Sender<String>>>>;

/// Talks to a long-lived child process over stdin/stdout, one JSON object
/// per line. Responses are routed back to callers by `image_id`, so several
/// requests may be in flight at once.
pub struct ExecClient {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: Pending,
    config: ExternalConfig,
    permits: Permits,
}

impl ExecClient {
    /// Spawns `command` through `sh -c`.
    pub fn spawn(command: &str, config: ExternalConfig) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Process(format!("spawn '{command}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let pending: Pending = Arc::default();
        let routes = Arc::clone(&pending);
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("image_id").and_then(|i| i.as_str()).map(str::to_string));
                let mut map = routes.lock().expect("pending lock");
                // Unroutable lines go to the sole waiter, if there is exactly one,
                // so that it can report the protocol violation.
                let key = match id {
                    Some(id) if map.contains_key(&id) => Some(id),
                    _ if map.len() == 1 => map.keys().next().cloned(),
                    _ => None,
                };
                match key.and_then(|k| map.remove(&k)) {
                    Some(tx) => {
                        let _ = tx.send(line);
                    }
                    None => log::warn!("dropping unroutable detector output: {line}"),
                }
            }
            // Child closed stdout: wake every waiter.
            routes.lock().expect("pending lock").clear();
        });
        Ok(ExecClient {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
            permits: Permits::new(config.max_in_flight),
            config,
        })
    }

    fn round_trip(&self, image_id: &str, line: &str) -> Result<String, OracleError> {
        let (tx, rx) = mpsc::channel();
        self.pending
            .lock()
            .expect("pending lock")
            .insert(image_id.to_string(), tx);
        {
            let mut stdin = self.stdin.lock().expect("stdin lock");
            if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
                self.pending.lock().expect("pending lock").remove(image_id);
                return Err(OracleError::Process(format!("write to detector: {e}")));
            }
        }
        match rx.recv_timeout(self.config.timeout()) {
            Ok(text) => Ok(text),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").remove(image_id);
                Err(OracleError::Timeout(format!(
                    "no response for '{image_id}' within {} ms",
                    self.config.timeout_ms
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(OracleError::Process("detector process closed its output".into()))
            }
        }
    }
}

impl Detector for ExecClient {
    fn predict(&self, query: &Query<'_>) -> Result<Vec<Detection>, OracleError> {
        let _permit = self.permits.acquire();
        let line = build_request(query, self.config.inline).to_line();
        with_retries(self.config.retries, query.image_id, || {
            let text = self.round_trip(query.image_id, &line)?;
            parse_response(&text, query.image_id)
        })
    }
}

impl Drop for ExecClient {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
