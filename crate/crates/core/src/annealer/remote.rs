//! JSON-over-HTTP sampler protocol.
//!
//! * `POST /program` with an Ising program document returns
//!   `{format_version, handle_id, effective_metadata}`.
//! * `POST /read` with `{format_version, handle_id, num_reads, seed}` returns
//!   `{format_version, states: [[-1|1, ...], ...], effective_metadata}`.
//!
//! Failures come back as a non-200 status with `{format_version, error,
//! message}`, where `error` is one of `bad_request`, `version_mismatch`,
//! `stale_handle`, `handle_closed` or `backend`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_reads, ProgramHandle, Sampler};
use crate::error::{Error, Result};
use crate::gibbs::{SampleBatch, SampleSource};
use crate::ising::{spin_to_binary, IsingProgram, SpinState};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EffectiveMetadata {
    pub effective_beta: f64,
    pub reads_served: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProgramResponse {
    format_version: u32,
    handle_id: String,
    effective_metadata: EffectiveMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReadRequest {
    format_version: u32,
    handle_id: String,
    num_reads: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReadResponse {
    format_version: u32,
    states: Vec<Vec<i8>>,
    effective_metadata: EffectiveMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct ErrorResponse {
    format_version: u32,
    error: String,
    message: String,
}

/// Client for a remote sampler.
pub struct RemoteSampler {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteSampler {
    pub fn new(endpoint: &str) -> Self {
        Self::with_timeout(endpoint, Duration::from_secs(600))
    }

    pub fn with_timeout(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteSampler {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post(&self, path: &str, body: String) -> Result<(u16, String)> {
        let url = format!("{}{}", self.endpoint, path);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| transport_error(&url, e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport_error(&url, e))?;
        Ok((status, text))
    }
}

fn transport_error(url: &str, e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(t) => Error::Timeout(format!("{url}: {t}")),
        other => Error::Transport(format!("{url}: {other}")),
    }
}

/// Turns a response into `T`, mapping error documents back onto the
/// matching error class.
fn decode<T: for<'de> Deserialize<'de>>(status: u16, text: &str, version_of: impl Fn(&T) -> u32) -> Result<T> {
    if status != 200 {
        let err: ErrorResponse = serde_json::from_str(text)
            .map_err(|e| Error::Protocol(format!("status {status} with unreadable body: {e}")))?;
        return Err(match err.error.as_str() {
            "stale_handle" => Error::StaleHandle(err.message),
            "handle_closed" => Error::HandleClosed(err.message),
            "version_mismatch" => Error::FormatVersion {
                found: err.format_version,
                supported: PROTOCOL_VERSION,
            },
            "backend" => Error::Backend(err.message),
            _ => Error::Protocol(format!("server rejected request ({}): {}", err.error, err.message)),
        });
    }
    let value: T = serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed response: {e}")))?;
    let found = version_of(&value);
    if found != PROTOCOL_VERSION {
        return Err(Error::FormatVersion {
            found,
            supported: PROTOCOL_VERSION,
        });
    }
    Ok(value)
}

/// Checks a read response and converts it to a binary batch. Nothing is
/// returned unless every state is well formed.
fn states_to_batch(program: &IsingProgram, states: Vec<Vec<i8>>, num_reads: usize, seed: u64) -> Result<SampleBatch> {
    if states.len() != num_reads {
        return Err(Error::Protocol(format!(
            "asked for {num_reads} reads, got {}",
            states.len()
        )));
    }
    let n = program.n_spins();
    let mut out = Vec::with_capacity(states.len());
    for (r, z) in states.into_iter().enumerate() {
        if z.len() != n {
            return Err(Error::Protocol(format!("read {r} has {} spins, expected {n}", z.len())));
        }
        let spins = SpinState::new(z).map_err(|e| Error::Protocol(format!("read {r}: {e}")))?;
        out.push(spin_to_binary(&spins, program.layout())?);
    }
    SampleBatch::new(out, SampleSource::Annealer, seed, 0)
}

impl Sampler for RemoteSampler {
    fn program(&self, program: &IsingProgram) -> Result<ProgramHandle> {
        let (status, text) = self.post("/program", program.to_json()?)?;
        let resp: ProgramResponse = decode(status, &text, |r: &ProgramResponse| r.format_version)?;
        let beta = resp.effective_metadata.effective_beta;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Protocol(format!("effective beta {beta} is not positive")));
        }
        Ok(ProgramHandle::new(resp.handle_id, program.clone(), beta))
    }

    fn read(&self, handle: &ProgramHandle, num_reads: usize, seed: u64) -> Result<SampleBatch> {
        check_reads(num_reads)?;
        handle.check_open()?;
        let req = ReadRequest {
            format_version: PROTOCOL_VERSION,
            handle_id: handle.id().to_string(),
            num_reads,
            seed,
        };
        let (status, text) = self.post("/read", serde_json::to_string(&req)?)?;
        let resp: ReadResponse = decode(status, &text, |r: &ReadResponse| r.format_version)?;
        let batch = states_to_batch(handle.program(), resp.states, num_reads, seed)?;
        handle.record_reads(num_reads);
        Ok(batch)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

type HandleTable = Arc<RwLock<HashMap<String, ProgramHandle>>>;

/// An HTTP server exposing a local backend over the protocol. Programming
/// requests are serialized; each read runs on its own thread.
pub struct LoopbackServer {
    url: String,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(backend: Arc<dyn Sampler>) -> Result<Self> {
        Self::bind("127.0.0.1:0", backend)
    }

    pub fn bind(addr: &str, backend: Arc<dyn Sampler>) -> Result<Self> {
        // std sets SO_REUSEADDR, so a restarted server can rebind its port
        let listener = std::net::TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
        let server = tiny_http::Server::from_listener(listener, None)
            .map_err(|e| Error::Transport(format!("listen on {addr}: {e}")))?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport("server has no IP address".into()))?;
        let server = Arc::new(server);
        let handles: HandleTable = Arc::new(RwLock::new(HashMap::new()));
        let program_lock = Arc::new(Mutex::new(()));
        let srv = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for request in srv.incoming_requests() {
                let backend = Arc::clone(&backend);
                let handles = Arc::clone(&handles);
                if request.url() == "/read" {
                    std::thread::spawn(move || serve(request, &*backend, &handles, None));
                } else {
                    serve(request, &*backend, &handles, Some(&program_lock));
                }
            }
        });
        Ok(LoopbackServer {
            url: format!("http://{local}"),
            server,
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Blocks until the server is stopped from elsewhere (or forever).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve(mut request: tiny_http::Request, backend: &dyn Sampler, handles: &HandleTable, lock: Option<&Mutex<()>>) {
    let mut body = String::new();
    let (status, payload) = match request.as_reader().read_to_string(&mut body) {
        Err(e) => error_payload(400, "bad_request", &format!("unreadable body: {e}")),
        Ok(_) => match (request.method(), request.url()) {
            (tiny_http::Method::Post, "/program") => {
                let _guard = lock.map(|l| l.lock().expect("program lock"));
                handle_program(&body, backend, handles)
            }
            (tiny_http::Method::Post, "/read") => handle_read(&body, backend, handles),
            (_, url) => error_payload(404, "bad_request", &format!("no route for {url}")),
        },
    };
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    let response = tiny_http::Response::from_string(payload)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn error_payload(status: u16, kind: &str, message: &str) -> (u16, String) {
    let body = ErrorResponse {
        format_version: PROTOCOL_VERSION,
        error: kind.to_string(),
        message: message.to_string(),
    };
    (status, serde_json::to_string(&body).expect("serializable"))
}

fn error_for(e: &Error) -> (u16, String) {
    match e {
        Error::StaleHandle(m) => error_payload(410, "stale_handle", m),
        Error::HandleClosed(m) => error_payload(410, "handle_closed", m),
        Error::FormatVersion { .. } => error_payload(400, "version_mismatch", &e.to_string()),
        e if e.is_backend() => error_payload(500, "backend", &e.to_string()),
        e => error_payload(400, "bad_request", &e.to_string()),
    }
}

fn handle_program(body: &str, backend: &dyn Sampler, handles: &HandleTable) -> (u16, String) {
    let result = IsingProgram::from_json(body).and_then(|p| backend.program(&p));
    match result {
        Err(e) => error_for(&e),
        Ok(h) => {
            let resp = ProgramResponse {
                format_version: PROTOCOL_VERSION,
                handle_id: h.id().to_string(),
                effective_metadata: EffectiveMetadata {
                    effective_beta: h.effective_beta(),
                    reads_served: 0,
                },
            };
            handles.write().expect("handle table").insert(h.id().to_string(), h);
            (200, serde_json::to_string(&resp).expect("serializable"))
        }
    }
}

fn handle_read(body: &str, backend: &dyn Sampler, handles: &HandleTable) -> (u16, String) {
    let req: ReadRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return error_payload(400, "bad_request", &format!("malformed read request: {e}")),
    };
    if req.format_version != PROTOCOL_VERSION {
        return error_for(&Error::FormatVersion {
            found: req.format_version,
            supported: PROTOCOL_VERSION,
        });
    }
    let handle = match handles.read().expect("handle table").get(&req.handle_id) {
        Some(h) => h.clone(),
        None => return error_for(&Error::StaleHandle(req.handle_id)),
    };
    match backend.read(&handle, req.num_reads, req.seed) {
        Err(e) => error_for(&e),
        Ok(batch) => {
            let states = batch
                .states()
                .iter()
                .map(|s| s.to_flat().iter().map(|&b| 2 * b as i8 - 1).collect())
                .collect();
            let resp = ReadResponse {
                format_version: PROTOCOL_VERSION,
                states,
                effective_metadata: EffectiveMetadata {
                    effective_beta: handle.effective_beta(),
                    reads_served: handle.reads_served(),
                },
            };
            (200, serde_json::to_string(&resp).expect("serializable"))
        }
    }
}
