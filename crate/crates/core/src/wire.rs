//! Framed JSON transport between the data owner and the tuning server.
//!
//! A frame is a 32-bit big-endian byte count followed by that many bytes of
//! UTF-8 JSON. Messages look like
//! `{"type": "TuneRequest", "request_id": "…", "payload": {…}}`.
//! Each connection carries one request at a time; the server runs a thread
//! per connection.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::confidential::{server_tune, EncryptedDatasetD, EncryptedDatasetF, Scheme};

pub const DEFAULT_PORT: u16 = 7461;
pub const DEFAULT_MAX_FRAME: usize = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("frame of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: usize, max: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("timed out waiting for the server")]
    Timeout,
    #[error("cannot connect to {addr}: {detail}")]
    Connect { addr: String, detail: String },
    #[error("frame error: {0}")]
    Frame(FrameError),
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("server replied {code}: {detail}")]
    Remote { code: ErrorCode, detail: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<FrameError> for WireError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(io) if is_timeout(&io) => WireError::Timeout,
            other => WireError::Frame(other),
        }
    }
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        FrameError::Io(e).into()
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadFrame,
    Oversize,
    UnsupportedScheme,
    TuneFailed,
    UnexpectedMessage,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    TuneRequest { request_id: String, dataset: Box<EncryptedDatasetD> },
    /// `server_seconds` is the wall time spent in the tuning call.
    TuneResponse { request_id: String, result: Box<EncryptedDatasetF>, server_seconds: f64 },
    Error { request_id: String, error: ErrorBody },
    Ping { request_id: String },
    Pong { request_id: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum MessageType {
    TuneRequest,
    TuneResponse,
    Error,
    Ping,
    Pong,
}

#[derive(Deserialize)]
struct RawMessage {
    #[serde(rename = "type")]
    kind: MessageType,
    request_id: String,
    #[serde(default)]
    payload: serde_json::Value,
    #[serde(default)]
    server_seconds: Option<f64>,
}

impl Message {
    pub fn request_id(&self) -> &str {
        match self {
            Message::TuneRequest { request_id, .. }
            | Message::TuneResponse { request_id, .. }
            | Message::Error { request_id, .. }
            | Message::Ping { request_id }
            | Message::Pong { request_id } => request_id,
        }
    }

    fn kind(&self) -> MessageType {
        match self {
            Message::TuneRequest { .. } => MessageType::TuneRequest,
            Message::TuneResponse { .. } => MessageType::TuneResponse,
            Message::Error { .. } => MessageType::Error,
            Message::Ping { .. } => MessageType::Ping,
            Message::Pong { .. } => MessageType::Pong,
        }
    }

    pub fn error(request_id: impl Into<String>, code: ErrorCode, detail: impl Into<String>) -> Self {
        Message::Error { request_id: request_id.into(), error: ErrorBody { code, detail: detail.into() } }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("messages always serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        let raw: RawMessage = serde_json::from_slice(bytes)?;
        let id = raw.request_id;
        Ok(match raw.kind {
            MessageType::TuneRequest => {
                Message::TuneRequest { request_id: id, dataset: Box::new(serde_json::from_value(raw.payload)?) }
            }
            MessageType::TuneResponse => Message::TuneResponse {
                request_id: id,
                result: Box::new(serde_json::from_value(raw.payload)?),
                server_seconds: raw.server_seconds.unwrap_or(0.0),
            },
            MessageType::Error => Message::Error { request_id: id, error: serde_json::from_value(raw.payload)? },
            MessageType::Ping => Message::Ping { request_id: id },
            MessageType::Pong => Message::Pong { request_id: id },
        })
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let extra = matches!(self, Message::TuneResponse { .. }) as usize;
        let mut st = s.serialize_struct("Message", 3 + extra)?;
        st.serialize_field("type", &self.kind())?;
        st.serialize_field("request_id", self.request_id())?;
        match self {
            Message::TuneRequest { dataset, .. } => st.serialize_field("payload", dataset)?,
            Message::TuneResponse { result, server_seconds, .. } => {
                st.serialize_field("payload", result)?;
                st.serialize_field("server_seconds", server_seconds)?;
            }
            Message::Error { error, .. } => st.serialize_field("payload", error)?,
            Message::Ping { .. } | Message::Pong { .. } => st.serialize_field("payload", &())?,
        }
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Frames

pub fn write_frame<W: Write + ?Sized>(w: &mut W, body: &[u8], max: usize) -> Result<(), FrameError> {
    if body.len() > max || body.len() > u32::MAX as usize {
        return Err(FrameError::Oversize { len: body.len(), max });
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean close before the header.
pub fn read_frame<R: Read + ?Sized>(r: &mut R, max: usize) -> Result<Option<Vec<u8>>, FrameError> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > max {
        return Err(FrameError::Oversize { len, max });
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(body))
}

pub fn send<W: Write + ?Sized>(w: &mut W, msg: &Message, max: usize) -> Result<(), FrameError> {
    write_frame(w, &msg.to_bytes(), max)
}

// ---------------------------------------------------------------------------
// Server

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub max_frame: usize,
    /// Schemes this server will tune; others get `unsupported_scheme`.
    pub schemes: Vec<Scheme>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { max_frame: DEFAULT_MAX_FRAME, schemes: vec![Scheme::Elgamal, Scheme::Ckks] }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits (i.e. forever unless shut down).
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Binds and starts accepting connections in the background.
pub fn serve<A: ToSocketAddrs>(addr: A, config: ServerConfig) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let config = Arc::new(config);
    let accept = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let config = Arc::clone(&config);
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &config);
            });
        }
    });
    Ok(ServerHandle { addr: local, stop, accept: Some(accept) })
}

/// Serves one connection until the peer closes or a frame is malformed.
pub fn handle_connection<S: Read + Write>(mut stream: S, config: &ServerConfig) -> Result<(), FrameError> {
    // The inbound cap limits what we accept, not what we answer with.
    let out_max = config.max_frame.max(DEFAULT_MAX_FRAME);
    loop {
        let body = match read_frame(&mut stream, config.max_frame) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(FrameError::Oversize { len, max }) => {
                let msg = Message::error("", ErrorCode::Oversize, format!("frame of {len} bytes exceeds {max}"));
                return send(&mut stream, &msg, out_max);
            }
            Err(FrameError::Truncated) => {
                // Best effort: the peer may still be reading.
                let msg = Message::error("", ErrorCode::BadFrame, "connection closed mid-frame");
                return send(&mut stream, &msg, out_max);
            }
            Err(e) => return Err(e),
        };
        let msg = match Message::from_bytes(&body) {
            Ok(m) => m,
            Err(e) => {
                let id = serde_json::from_slice::<serde_json::Value>(&body)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(|x| x.as_str()).map(str::to_owned))
                    .unwrap_or_default();
                let msg = Message::error(id, ErrorCode::BadFrame, e.to_string());
                return send(&mut stream, &msg, out_max);
            }
        };
        let reply = respond(msg, config);
        send(&mut stream, &reply, out_max)?;
    }
}

fn respond(msg: Message, config: &ServerConfig) -> Message {
    match msg {
        Message::Ping { request_id } => Message::Pong { request_id },
        Message::TuneRequest { request_id, dataset } => {
            let scheme = dataset.scheme();
            if !config.schemes.contains(&scheme) {
                return Message::error(request_id, ErrorCode::UnsupportedScheme, format!("no handler for {scheme}"));
            }
            let start = Instant::now();
            match server_tune(&dataset) {
                Ok(result) => Message::TuneResponse {
                    request_id,
                    result: Box::new(result),
                    server_seconds: start.elapsed().as_secs_f64(),
                },
                Err(e) => Message::error(request_id, ErrorCode::TuneFailed, e.to_string()),
            }
        }
        other => Message::error(
            other.request_id(),
            ErrorCode::UnexpectedMessage,
            "only TuneRequest and Ping are accepted",
        ),
    }
}

// ---------------------------------------------------------------------------
// Client

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub fn fresh_request_id() -> String {
    format!("{}-{}", std::process::id(), NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

/// Tuning result plus the server-reported compute time.
#[derive(Clone, Debug)]
pub struct TuneReply {
    pub result: EncryptedDatasetF,
    pub server_seconds: f64,
}

/// Sends one request over an open stream and waits for the reply.
pub fn exchange<S: Read + Write>(stream: &mut S, msg: &Message, max: usize) -> Result<Message, WireError> {
    send(stream, msg, max)?;
    let body = read_frame(stream, max)?.ok_or(WireError::Frame(FrameError::Truncated))?;
    let reply = Message::from_bytes(&body)?;
    if let Message::Error { error, .. } = reply {
        return Err(WireError::Remote { code: error.code, detail: error.detail });
    }
    if reply.request_id() != msg.request_id() {
        return Err(WireError::Protocol(format!(
            "reply id {:?} does not match request id {:?}",
            reply.request_id(),
            msg.request_id()
        )));
    }
    Ok(reply)
}

/// Round-trips `D` over an already connected stream.
pub fn request_tune_on<S: Read + Write>(
    stream: &mut S,
    d: &EncryptedDatasetD,
    max: usize,
) -> Result<TuneReply, WireError> {
    let msg = Message::TuneRequest { request_id: fresh_request_id(), dataset: Box::new(d.clone()) };
    match exchange(stream, &msg, max)? {
        Message::TuneResponse { result, server_seconds, .. } => {
            if result.scheme() != d.scheme() {
                return Err(WireError::Protocol(format!(
                    "asked for {} but received a {} result",
                    d.scheme(),
                    result.scheme()
                )));
            }
            Ok(TuneReply { result: *result, server_seconds })
        }
        other => Err(WireError::Protocol(format!("unexpected reply {:?}", other.kind()))),
    }
}

fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<TcpStream, WireError> {
    let mut last = None;
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => {
                s.set_read_timeout(Some(timeout))?;
                s.set_write_timeout(Some(timeout))?;
                return Ok(s);
            }
            Err(e) if is_timeout(&e) => return Err(WireError::Timeout),
            Err(e) => last = Some(WireError::Connect { addr: a.to_string(), detail: e.to_string() }),
        }
    }
    Err(last.unwrap_or_else(|| WireError::Connect { addr: "?".into(), detail: "address did not resolve".into() }))
}

/// Connects, tunes remotely and returns `F` with the server time.
pub fn request_tune<A: ToSocketAddrs>(
    addr: A,
    d: &EncryptedDatasetD,
    timeout: Duration,
) -> Result<TuneReply, WireError> {
    let mut stream = connect(addr, timeout)?;
    request_tune_on(&mut stream, d, DEFAULT_MAX_FRAME)
}

pub fn ping<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<(), WireError> {
    let mut stream = connect(addr, timeout)?;
    match exchange(&mut stream, &Message::Ping { request_id: fresh_request_id() }, DEFAULT_MAX_FRAME)? {
        Message::Pong { .. } => Ok(()),
        other => Err(WireError::Protocol(format!("unexpected reply {:?}", other.kind()))),
    }
}
