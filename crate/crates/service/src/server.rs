use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use ctxguard_core::guard::{Guard, GuardConfig, GuardError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{Control, Dispatcher};

pub const DEFAULT_SOCKET: &str = "/tmp/ctxguard.sock";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Unix socket path; used unless `tcp` is set.
    pub socket: Option<PathBuf>,
    /// `host:port` to listen on instead of a Unix socket.
    pub tcp: Option<String>,
    pub guard: GuardConfig,
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("bind {0}: {1}")]
    Bind(String, io::Error),
    #[error(transparent)]
    Guard(#[from] GuardError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Unix(PathBuf),
    Tcp(SocketAddr),
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
            Endpoint::Tcp(a) => write!(f, "tcp:{a}"),
        }
    }
}

enum Listener {
    Unix(UnixListener),
    Tcp(TcpListener),
}

pub struct Server {
    listener: Listener,
    endpoint: Endpoint,
    guard: Arc<Guard>,
    stop: Arc<AtomicBool>,
}

fn serve_stream<S: Read + Write>(reader: S, mut writer: impl Write, guard: Arc<Guard>) -> io::Result<Control> {
    let mut dispatcher = Dispatcher::new(guard);
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(Control::Continue);
        }
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let (mut response, control) = dispatcher.handle_line(line);
        response.push('\n');
        writer.write_all(response.as_bytes())?;
        writer.flush()?;
        if control == Control::Shutdown {
            return Ok(control);
        }
    }
}

impl Server {
    pub fn bind(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let guard = Arc::new(Guard::new(config.guard.clone())?);
        Self::bind_with(config, guard)
    }

    /// Binds using an already constructed guard.
    pub fn bind_with(config: &ServiceConfig, guard: Arc<Guard>) -> Result<Self, ServiceError> {
        let (listener, endpoint) = match &config.tcp {
            Some(addr) => {
                let l = TcpListener::bind(addr).map_err(|e| ServiceError::Bind(addr.clone(), e))?;
                let local = l.local_addr().map_err(|e| ServiceError::Bind(addr.clone(), e))?;
                (Listener::Tcp(l), Endpoint::Tcp(local))
            }
            None => {
                let path = config.socket.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_SOCKET));
                if path.exists() && UnixStream::connect(&path).is_err() {
                    // stale socket from a previous run
                    let _ = std::fs::remove_file(&path);
                }
                let l = UnixListener::bind(&path).map_err(|e| ServiceError::Bind(path.display().to_string(), e))?;
                (Listener::Unix(l), Endpoint::Unix(path))
            }
        };
        Ok(Server { listener, endpoint, guard, stop: Arc::new(AtomicBool::new(false)) })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn guard(&self) -> Arc<Guard> {
        self.guard.clone()
    }

    fn wake(endpoint: &Endpoint) {
        let _ = match endpoint {
            Endpoint::Unix(p) => UnixStream::connect(p).map(drop),
            Endpoint::Tcp(a) => TcpStream::connect(a).map(drop),
        };
    }

    fn handle<S: Read + Write + Send + 'static>(
        stream: io::Result<S>,
        clone: impl FnOnce(&S) -> io::Result<S>,
        guard: &Arc<Guard>,
        stop: &Arc<AtomicBool>,
        endpoint: &Endpoint,
    ) {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                return;
            }
        };
        let writer = match clone(&stream) {
            Ok(w) => w,
            Err(e) => {
                log::warn!("socket clone failed: {e}");
                return;
            }
        };
        let (guard, stop, endpoint) = (guard.clone(), stop.clone(), endpoint.clone());
        std::thread::spawn(move || match serve_stream(stream, writer, guard) {
            Ok(Control::Shutdown) => {
                stop.store(true, Ordering::SeqCst);
                Self::wake(&endpoint);
            }
            Ok(Control::Continue) => {}
            Err(e) => log::debug!("connection closed: {e}"),
        });
    }

    /// Accepts connections until a `shutdown` frame arrives. One thread and
    /// one session per connection.
    pub fn run(self) -> io::Result<()> {
        log::info!("listening on {}", self.endpoint);
        loop {
            match &self.listener {
                Listener::Unix(l) => {
                    let s = l.accept().map(|(s, _)| s);
                    if self.stop.load(Ordering::SeqCst) {
                        break;
                    }
                    Self::handle(s, UnixStream::try_clone, &self.guard, &self.stop, &self.endpoint);
                }
                Listener::Tcp(l) => {
                    let s = l.accept().map(|(s, _)| s);
                    if self.stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(s) = &s {
                        let _ = s.set_nodelay(true);
                    }
                    Self::handle(s, TcpStream::try_clone, &self.guard, &self.stop, &self.endpoint);
                }
            }
        }
        if let Endpoint::Unix(p) = &self.endpoint {
            let _ = std::fs::remove_file(p);
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> (Endpoint, JoinHandle<io::Result<()>>) {
        let endpoint = self.endpoint.clone();
        (endpoint, std::thread::spawn(move || self.run()))
    }
}

/// Blocking line-oriented client.
pub struct Client {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
}

impl Client {
    pub fn connect(endpoint: &Endpoint) -> io::Result<Self> {
        let (r, w): (Box<dyn Read + Send>, Box<dyn Write + Send>) = match endpoint {
            Endpoint::Unix(p) => {
                let s = UnixStream::connect(p)?;
                (Box::new(s.try_clone()?), Box::new(s))
            }
            Endpoint::Tcp(a) => {
                let s = TcpStream::connect(a)?;
                s.set_nodelay(true)?;
                (Box::new(s.try_clone()?), Box::new(s))
            }
        };
        Ok(Client { reader: BufReader::new(r), writer: w })
    }

    /// Sends one raw line and returns the response line without its newline.
    pub fn round_trip(&mut self, line: &str) -> io::Result<String> {
        self.send(line)?;
        self.receive()
    }

    pub fn send(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }

    pub fn receive(&mut self) -> io::Result<String> {
        let mut out = String::new();
        if self.reader.read_line(&mut out)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "service closed the connection"));
        }
        Ok(out.trim_end_matches('\n').to_owned())
    }

    pub fn request(&mut self, frame: &serde_json::Value) -> io::Result<serde_json::Value> {
        let line = self.round_trip(&frame.to_string())?;
        serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
