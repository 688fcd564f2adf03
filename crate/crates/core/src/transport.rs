//! Request/response transport for out-of-process model providers.
//!
//! Providers are addressed by a short descriptor: `cmd:<shell command>` runs
//! the command with the JSON request on stdin and reads the JSON response from
//! stdout; `http://...` POSTs the request and reads the response body.

use std::io::{Read, Write};
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unsupported provider descriptor `{0}` (expected `stub`, `cmd:<command>` or `http://...`)")]
    Unsupported(String),
    #[error("provider command failed: {0}")]
    Command(String),
    #[error("provider request failed: {0}")]
    Http(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Command(String),
    Http(String),
}

impl Transport {
    /// Parses a provider descriptor. `stub` yields `None`.
    pub fn from_descriptor(descriptor: &str) -> Result<Option<Transport>, TransportError> {
        if descriptor == "stub" {
            Ok(None)
        } else if let Some(cmd) = descriptor.strip_prefix("cmd:") {
            Ok(Some(Transport::Command(cmd.to_owned())))
        } else if descriptor.starts_with("http://") || descriptor.starts_with("https://") {
            Ok(Some(Transport::Http(descriptor.to_owned())))
        } else {
            Err(TransportError::Unsupported(descriptor.to_owned()))
        }
    }

    pub fn call(&self, request: &str) -> Result<String, TransportError> {
        match self {
            Transport::Command(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::piped())
                    .spawn()?;
                child.stdin.take().expect("piped stdin").write_all(request.as_bytes())?;
                let mut out = String::new();
                child.stdout.take().expect("piped stdout").read_to_string(&mut out)?;
                let status = child.wait()?;
                if !status.success() {
                    let mut err = String::new();
                    if let Some(mut stderr) = child.stderr.take() {
                        let _ = stderr.read_to_string(&mut err);
                    }
                    return Err(TransportError::Command(format!("{status}: {}", err.trim())));
                }
                Ok(out)
            }
            Transport::Http(url) => {
                let mut resp = ureq::post(url)
                    .header("Content-Type", "application/json")
                    .send(request)
                    .map_err(|e| TransportError::Http(e.to_string()))?;
                resp.body_mut().read_to_string().map_err(|e| TransportError::Http(e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors() {
        assert_eq!(Transport::from_descriptor("stub").unwrap(), None);
        assert_eq!(
            Transport::from_descriptor("cmd:cat").unwrap(),
            Some(Transport::Command("cat".into()))
        );
        assert!(Transport::from_descriptor("ftp://x").is_err());
    }

    #[test]
    fn command_transport_echoes() {
        let t = Transport::Command("cat".into());
        assert_eq!(t.call("{\"a\":1}").unwrap(), "{\"a\":1}");
        assert!(Transport::Command("exit 3".into()).call("").is_err());
    }
}
