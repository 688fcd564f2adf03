//! Local-socket service exposing the guard to agent frameworks.
//!
//! Frames are single-line JSON objects. Requests carry `id` and `type`;
//! responses echo `id` with type `<type>_resp`, or `error` with `code` and
//! `msg`. Response keys are sorted.

pub mod dispatch;
pub mod server;

pub use dispatch::{decision_fields, Control, Dispatcher, FrameError, PROTOCOL_VERSION};
pub use server::{Client, Endpoint, Server, ServiceConfig, ServiceError, DEFAULT_SOCKET};
