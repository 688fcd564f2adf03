//! Intent- and context-aware access control for computer-use agents.
//!
//! A [`model::ContextSpace`] holds an application's functions, the intents
//! under which each may run, and the rules a [`model::ContextVector`] must
//! satisfy for each (function, intent) pair. [`guard::Guard`] ties the pieces
//! together at runtime: it tracks sessions, extracts intents from user
//! instructions, refreshes contexts and returns a [`verifier::Decision`] for
//! every agent action.

pub mod dsl;
pub mod gui;
pub mod guard;
pub mod intent;
pub mod manager;
pub mod model;
pub mod transport;
pub mod value;
pub mod verifier;

pub use value::{ContextType, Value};
