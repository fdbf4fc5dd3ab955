//! Policy wire protocol: newline-delimited UTF-8 JSON frames over TCP.
//!
//! The client opens with `hello` listing the versions it speaks; the server
//! answers with the chosen version or an `unsupported_version` error. After
//! that each `request` frame gets exactly one `response` or `error` frame
//! carrying the same `request_id`. Images are base64 PNG.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use guirl_core::policies::PolicyFactory;
use guirl_core::prompt::{PolicyRequest, Sampling};
use guirl_core::sim::{Observation, Policy, PolicyError};
use guirl_core::trajectory::DOWNSAMPLE_FACTOR;
use serde::{Deserialize, Serialize};

use crate::imaging::screenshot_png;

pub const WIRE_VERSION: u32 = 1;
/// Frames longer than this are rejected.
pub const MAX_FRAME_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestFrame {
    pub request_id: String,
    #[serde(flatten)]
    pub request: PolicyRequest<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    UnsupportedVersion,
    BadRequest,
    BackendTimeout,
    BackendError,
    Overloaded,
}

impl ErrorKind {
    /// Whether retrying the same frame may succeed.
    pub fn transient(self) -> bool {
        matches!(self, Self::BackendTimeout | Self::BackendError | Self::Overloaded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    #[serde(default)]
    pub request_id: Option<String>,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Hello { versions: Vec<u32>, client: String },
    Request(RequestFrame),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Hello { version: u32, server: String },
    Response { request_id: String, text: String },
    Error(ErrorFrame),
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("connect to {endpoint}: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed by peer")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("remote {:?}: {}", .0.kind, .0.message)]
    Remote(ErrorFrame),
}

impl WireError {
    fn into_policy_error(self) -> PolicyError {
        match self {
            WireError::Protocol(m) => PolicyError::Protocol(m),
            WireError::Remote(f) if !f.kind.transient() => {
                PolicyError::Protocol(format!("{:?}: {}", f.kind, f.message))
            }
            other => PolicyError::Transport(other.to_string()),
        }
    }
}

fn write_frame<T: Serialize>(w: &mut impl Write, frame: &T) -> Result<(), WireError> {
    let mut line = serde_json::to_vec(frame).map_err(|e| WireError::Protocol(e.to_string()))?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on clean end of stream.
fn read_frame<T: for<'de> Deserialize<'de>>(r: &mut impl BufRead) -> Result<Option<T>, WireError> {
    let mut line = Vec::new();
    let n = r.take(MAX_FRAME_BYTES + 1).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    if n as u64 > MAX_FRAME_BYTES {
        return Err(WireError::Protocol("frame too large".into()));
    }
    if line.last() != Some(&b'\n') {
        return Err(WireError::Protocol("truncated frame".into()));
    }
    serde_json::from_slice(&line).map(Some).map_err(|e| WireError::Protocol(format!("bad frame: {e}")))
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

pub struct WireClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    id_prefix: String,
    pub version: u32,
}

impl WireClient {
    /// Connects and performs the version handshake.
    pub fn connect(endpoint: &str, timeout: Duration, id_prefix: &str) -> Result<Self, WireError> {
        let connect_err = |source| WireError::Connect { endpoint: endpoint.into(), source };
        let addrs: Vec<SocketAddr> = endpoint.to_socket_addrs().map_err(connect_err)?.collect();
        let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses");
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = e,
            }
        }
        let stream = stream.ok_or_else(|| connect_err(last))?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let mut client = Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            next_id: 0,
            id_prefix: id_prefix.into(),
            version: 0,
        };
        let hello =
            ClientFrame::Hello { versions: vec![WIRE_VERSION], client: format!("guirl/{}", env!("CARGO_PKG_VERSION")) };
        write_frame(&mut client.writer, &hello)?;
        match read_frame::<ServerFrame>(&mut client.reader)?.ok_or(WireError::Closed)? {
            ServerFrame::Hello { version, .. } if version == WIRE_VERSION => client.version = version,
            ServerFrame::Hello { version, .. } => {
                return Err(WireError::Protocol(format!("server chose unsupported version {version}")))
            }
            ServerFrame::Error(e) => return Err(WireError::Remote(e)),
            other => return Err(WireError::Protocol(format!("expected hello, got {other:?}"))),
        }
        Ok(client)
    }

    /// Sends one request and waits for its reply.
    pub fn call(&mut self, request: PolicyRequest<String>) -> Result<String, WireError> {
        let request_id = format!("{}{}", self.id_prefix, self.next_id);
        self.next_id += 1;
        write_frame(&mut self.writer, &ClientFrame::Request(RequestFrame { request_id: request_id.clone(), request }))?;
        match read_frame::<ServerFrame>(&mut self.reader)?.ok_or(WireError::Closed)? {
            ServerFrame::Response { request_id: id, text } if id == request_id => Ok(text),
            ServerFrame::Response { request_id: id, .. } => {
                Err(WireError::Protocol(format!("response for {id}, expected {request_id}")))
            }
            ServerFrame::Error(e) if e.request_id.as_deref().is_none_or(|id| id == request_id) => {
                Err(WireError::Remote(e))
            }
            other => Err(WireError::Protocol(format!("unexpected frame {other:?}"))),
        }
    }
}

impl Drop for WireClient {
    fn drop(&mut self) {
        let _ = self.writer.shutdown(Shutdown::Both);
    }
}

/// Builds the wire request for one observation: system prompt, full textual
/// history and the windowed screens, downsampled and PNG-encoded.
pub fn request_for(
    obs: &Observation<'_>,
    sampling: Sampling,
    downsample: u32,
) -> Result<PolicyRequest<String>, PolicyError> {
    let mut images = Vec::with_capacity(obs.window.visual.len());
    for state in &obs.window.visual {
        let png = screenshot_png(obs.script, state, downsample).map_err(|e| PolicyError::Protocol(e.to_string()))?;
        images.push(B64.encode(png));
    }
    Ok(PolicyRequest::new(&obs.task.instruction, obs.window.textual.clone(), images, sampling))
}

/// A policy served over the wire. Connects lazily and reconnects after a
/// transport failure, so a retry wrapper gets a fresh connection.
pub struct WirePolicy {
    endpoint: String,
    timeout: Duration,
    sampling: Sampling,
    downsample: u32,
    id_prefix: String,
    client: Option<WireClient>,
}

impl WirePolicy {
    pub fn new(endpoint: &str, timeout: Duration, sampling: Sampling, id_prefix: &str) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            sampling,
            downsample: DOWNSAMPLE_FACTOR,
            id_prefix: id_prefix.into(),
            client: None,
        }
    }

    pub fn with_downsample(mut self, factor: u32) -> Self {
        self.downsample = factor.max(1);
        self
    }
}

impl Policy for WirePolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        let request = request_for(obs, self.sampling, self.downsample)?;
        if self.client.is_none() {
            let c = WireClient::connect(&self.endpoint, self.timeout, &self.id_prefix)
                .map_err(WireError::into_policy_error)?;
            self.client = Some(c);
        }
        let client = self.client.as_mut().expect("connected above");
        client.call(request).map_err(|e| {
            if !matches!(e, WireError::Remote(_)) {
                self.client = None;
            }
            e.into_policy_error()
        })
    }
}

/// One wire connection per group member.
#[derive(Debug, Clone)]
pub struct WireFactory {
    pub endpoint: String,
    pub timeout: Duration,
    pub sampling: Sampling,
    pub downsample: u32,
}

impl PolicyFactory for WireFactory {
    fn policy(&self, group: usize, member: usize) -> Box<dyn Policy + Send> {
        let id = format!("g{group}-m{member}-");
        Box::new(WirePolicy::new(&self.endpoint, self.timeout, self.sampling, &id).with_downsample(self.downsample))
    }
}

/// Checks that an endpoint accepts the handshake.
pub fn probe(endpoint: &str, timeout: Duration) -> Result<u32, WireError> {
    WireClient::connect(endpoint, timeout, "probe-").map(|c| c.version)
}

// ---------------------------------------------------------------------------
// Server (test doubles and local bridges)
// ---------------------------------------------------------------------------

/// Produces reply text for one request frame.
pub trait Backend: Send + Sync {
    fn complete(&self, frame: &RequestFrame) -> Result<String, (ErrorKind, String)>;
}

impl<F> Backend for F
where
    F: Fn(&RequestFrame) -> Result<String, (ErrorKind, String)> + Send + Sync,
{
    fn complete(&self, frame: &RequestFrame) -> Result<String, (ErrorKind, String)> {
        self(frame)
    }
}

/// Replies with the same text to every request.
pub struct EchoBackend(pub String);

impl Backend for EchoBackend {
    fn complete(&self, _frame: &RequestFrame) -> Result<String, (ErrorKind, String)> {
        Ok(self.0.clone())
    }
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicUsize>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// Request frames answered so far.
    pub fn served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `backend` on `addr` (port 0 picks a free port), one thread per
/// connection, speaking the versions in `versions`.
pub fn serve(addr: &str, backend: Arc<dyn Backend>, versions: Vec<u32>) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let served = Arc::new(AtomicUsize::new(0));
    let (stop2, served2) = (stop.clone(), served.clone());
    let thread = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if stop2.load(Ordering::SeqCst) {
                break;
            }
            let Ok(conn) = conn else { continue };
            let (backend, versions, served) = (backend.clone(), versions.clone(), served2.clone());
            std::thread::spawn(move || {
                if let Err(e) = serve_connection(conn, &*backend, &versions, &served) {
                    log::debug!("wire connection ended: {e}");
                }
            });
        }
    });
    Ok(ServerHandle { addr: local, stop, served, thread: Some(thread) })
}

fn serve_connection(
    conn: TcpStream,
    backend: &dyn Backend,
    versions: &[u32],
    served: &AtomicUsize,
) -> Result<(), WireError> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut writer = conn;
    let Some(ClientFrame::Hello { versions: offered, .. }) = read_frame::<ClientFrame>(&mut reader)? else {
        let e = ErrorFrame { request_id: None, kind: ErrorKind::BadRequest, message: "expected hello".into() };
        return write_frame(&mut writer, &ServerFrame::Error(e));
    };
    let Some(&version) = offered.iter().filter(|v| versions.contains(v)).max() else {
        let e = ErrorFrame {
            request_id: None,
            kind: ErrorKind::UnsupportedVersion,
            message: format!("server speaks {versions:?}, client offered {offered:?}"),
        };
        return write_frame(&mut writer, &ServerFrame::Error(e));
    };
    write_frame(&mut writer, &ServerFrame::Hello { version, server: "guirl-test-double".into() })?;
    loop {
        let frame = match read_frame::<ClientFrame>(&mut reader) {
            Ok(Some(ClientFrame::Request(f))) => f,
            Ok(Some(ClientFrame::Hello { .. })) => {
                let e = ErrorFrame { request_id: None, kind: ErrorKind::BadRequest, message: "repeated hello".into() };
                write_frame(&mut writer, &ServerFrame::Error(e))?;
                continue;
            }
            Ok(None) => return Ok(()),
            Err(WireError::Protocol(message)) => {
                let e = ErrorFrame { request_id: None, kind: ErrorKind::BadRequest, message };
                write_frame(&mut writer, &ServerFrame::Error(e))?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let reply = match backend.complete(&frame) {
            Ok(text) => ServerFrame::Response { request_id: frame.request_id, text },
            Err((kind, message)) => {
                ServerFrame::Error(ErrorFrame { request_id: Some(frame.request_id), kind, message })
            }
        };
        served.fetch_add(1, Ordering::SeqCst);
        write_frame(&mut writer, &reply)?;
    }
}
