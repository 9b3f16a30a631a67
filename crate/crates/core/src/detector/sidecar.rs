//! Client for an out-of-process detector speaking newline-delimited JSON.
//!
//! Each request line is `{"id": <int>, "frame": "<path>"}` and must be
//! answered by exactly one response line
//! `{"id": <int>, "detections": [{"label", "confidence", "box"}]}`, in order.
//! A response may carry an `"error"` string instead of (or alongside empty)
//! detections. Boxes are in the original frame's pixel space.

use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{BackendError, Detector};
use crate::frames::FrameRef;
use crate::geometry::Detection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: i64,
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: i64,
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Request {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("request serializes");
        line.push('\n');
        line
    }
}

impl Response {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("response serializes");
        line.push('\n');
        line
    }

    /// Parse and validate one response line. Labels outside the class set,
    /// confidences outside `[0, 1]` and malformed boxes are protocol errors.
    pub fn parse_line(line: &str) -> Result<Response, BackendError> {
        serde_json::from_str(line.trim_end()).map_err(|e| BackendError::Protocol(format!("bad response {:?}: {e}", line.trim_end())))
    }
}

/// Where the sidecar lives.
///
/// * `tcp://host:port`
/// * `unix:/path/to/socket`
/// * `stdio:<program> [args...]`, spawned per worker; arguments are split on
///   whitespace
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SidecarAddress {
    Tcp(String),
    Unix(PathBuf),
    Spawn(Vec<String>),
}

impl SidecarAddress {
    pub fn parse(spec: &str) -> Result<Self, String> {
        if let Some(addr) = spec.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err("empty tcp address".into());
            }
            Ok(SidecarAddress::Tcp(addr.to_string()))
        } else if let Some(path) = spec.strip_prefix("unix:") {
            if path.is_empty() {
                return Err("empty unix socket path".into());
            }
            Ok(SidecarAddress::Unix(PathBuf::from(path)))
        } else if let Some(cmd) = spec.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err("empty sidecar command".into());
            }
            Ok(SidecarAddress::Spawn(argv))
        } else {
            Err(format!("sidecar address {spec:?} must start with tcp://, unix: or stdio:"))
        }
    }
}

impl fmt::Display for SidecarAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SidecarAddress::Tcp(a) => write!(f, "tcp://{a}"),
            SidecarAddress::Unix(p) => write!(f, "unix:{}", p.display()),
            SidecarAddress::Spawn(argv) => write!(f, "stdio:{}", argv.join(" ")),
        }
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Connection {
    fn open(addr: &SidecarAddress) -> io::Result<Self> {
        match addr {
            SidecarAddress::Tcp(a) => {
                let stream = TcpStream::connect(a)?;
                let reader = BufReader::new(stream.try_clone()?);
                Ok(Connection { reader: Box::new(reader), writer: Box::new(stream), child: None })
            }
            #[cfg(unix)]
            SidecarAddress::Unix(p) => {
                let stream = std::os::unix::net::UnixStream::connect(p)?;
                let reader = BufReader::new(stream.try_clone()?);
                Ok(Connection { reader: Box::new(reader), writer: Box::new(stream), child: None })
            }
            #[cfg(not(unix))]
            SidecarAddress::Unix(_) => Err(io::Error::new(io::ErrorKind::Unsupported, "unix sockets are not available")),
            SidecarAddress::Spawn(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                })
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// One connection to a sidecar. Not shared between threads; the worker pool
/// opens one per worker.
pub struct SidecarClient {
    address: Option<SidecarAddress>,
    conn: Connection,
    next_id: i64,
}

impl SidecarClient {
    pub fn connect(address: &SidecarAddress) -> Result<Self, BackendError> {
        let conn = Connection::open(address).map_err(|e| BackendError::Transport(format!("{address}: {e}")))?;
        Ok(SidecarClient { address: Some(address.clone()), conn, next_id: 1 })
    }

    /// Wrap an already-open stream pair. Such a client cannot reconnect.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        SidecarClient {
            address: None,
            conn: Connection { reader: Box::new(reader), writer: Box::new(writer), child: None },
            next_id: 1,
        }
    }

    fn round_trip(&mut self, frame: &FrameRef) -> Result<Response, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        let request = Request { id, frame: frame.path.to_string_lossy().into_owned() };
        let transport = |e: io::Error| BackendError::Transport(e.to_string());
        self.conn.writer.write_all(request.to_line().as_bytes()).map_err(transport)?;
        self.conn.writer.flush().map_err(transport)?;

        let mut line = String::new();
        let n = self.conn.reader.read_line(&mut line).map_err(transport)?;
        if n == 0 {
            return Err(BackendError::Transport("sidecar closed the connection".into()));
        }
        let response = Response::parse_line(&line)?;
        if response.id != id {
            return Err(BackendError::Protocol(format!("response id {} does not match request id {id}", response.id)));
        }
        Ok(response)
    }
}

impl Detector for SidecarClient {
    fn detect(&mut self, frame: &FrameRef) -> Result<Vec<Detection>, BackendError> {
        let response = self.round_trip(frame)?;
        if let Some(err) = response.error {
            return Err(BackendError::Protocol(format!("sidecar error for {}: {err}", frame.path.display())));
        }
        Ok(response.detections)
    }

    fn reconnect(&mut self) -> Result<(), BackendError> {
        let Some(address) = self.address.clone() else {
            return Err(BackendError::Transport("connection cannot be reopened".into()));
        };
        *self = SidecarClient::connect(&address)?;
        Ok(())
    }
}
