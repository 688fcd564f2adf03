//! Replay harness for the guard: scripted traces, in-process and socket
//! runners, security and latency metrics, and synthetic load spaces.

pub mod bench;
pub mod metrics;
pub mod runner;
pub mod synthetic;
pub mod trace;

pub use bench::{bench, measure_overhead, replay_inproc, replay_socket, BenchOptions, CorpusRun, FullReport};
pub use metrics::{compute_metrics, latency_stats, BenchReport, LatencyStats, Overhead, SecurityReport};
pub use runner::{run_trace, Backend, InProcess, Outcome, RunError, RunOptions, SocketClient, StepRecord};
pub use synthetic::synthetic_space;
pub use trace::{load_corpus, load_trace, parse_trace, Expect, Label, Trace, TraceAction, TraceStep};
