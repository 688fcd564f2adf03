//! Corpus-level replay: security metrics, latency and guard overhead.

use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use ctxguard_core::guard::{Guard, GuardConfig};
use ctxguard_core::model::ContextSpace;
use ctxguard_service::{Endpoint, Server, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::metrics::{compute_metrics, latency_stats, BenchReport, LatencyStats, Overhead};
use crate::runner::{run_trace, run_unguarded, Backend, InProcess, RunError, RunOptions, SocketClient, StepRecord};
use crate::trace::{Label, Trace};

/// Records of every action in corpus order plus `pre_action` latencies.
#[derive(Debug, Clone)]
pub struct CorpusRun {
    pub records: Vec<StepRecord>,
    pub elapsed: Duration,
}

impl CorpusRun {
    pub fn latencies(&self) -> Vec<Duration> {
        self.records.iter().map(|r| r.latency).collect()
    }
}

/// Replays each trace on a fresh backend from `connect`.
pub fn replay_corpus(
    mut connect: impl FnMut() -> Result<Box<dyn Backend>, RunError>,
    space: &ContextSpace,
    traces: &[Trace],
    options: &RunOptions,
) -> Result<CorpusRun, RunError> {
    let mut run = CorpusRun { records: Vec::new(), elapsed: Duration::ZERO };
    for trace in traces {
        let mut backend = connect()?;
        let t = run_trace(backend.as_mut(), space, trace, options)?;
        run.records.extend(t.records);
        run.elapsed += t.elapsed;
    }
    Ok(run)
}

/// Replays in-process with one shared guard and a session per trace.
pub fn replay_inproc(
    config: &GuardConfig,
    space: &ContextSpace,
    traces: &[Trace],
    options: &RunOptions,
) -> Result<CorpusRun, RunError> {
    let guard = Arc::new(Guard::new(config.clone()).map_err(|e| RunError::Guard(e.to_string()))?);
    replay_corpus(|| Ok(Box::new(InProcess::new(guard.clone()))), space, traces, options)
}

/// A service on a private Unix socket, stopped by [`PrivateService::stop`].
pub struct PrivateService {
    pub endpoint: Endpoint,
    handle: JoinHandle<std::io::Result<()>>,
    _dir: tempfile::TempDir,
}

impl PrivateService {
    pub fn start(config: &GuardConfig) -> Result<Self, RunError> {
        let dir = tempfile::tempdir()?;
        let service = ServiceConfig { socket: Some(dir.path().join("ctxguard.sock")), tcp: None, guard: config.clone() };
        let server = Server::bind(&service).map_err(|e| RunError::Service(e.to_string()))?;
        let (endpoint, handle) = server.spawn();
        Ok(PrivateService { endpoint, handle, _dir: dir })
    }

    pub fn stop(self) -> Result<(), RunError> {
        SocketClient::connect(&self.endpoint)?.shutdown()?;
        self.handle.join().map_err(|_| RunError::Service("server thread panicked".into()))??;
        Ok(())
    }
}

/// Replays over the socket of a fresh private service.
pub fn replay_socket(
    config: &GuardConfig,
    space: &ContextSpace,
    traces: &[Trace],
    options: &RunOptions,
) -> Result<CorpusRun, RunError> {
    let service = PrivateService::start(config)?;
    let endpoint = service.endpoint.clone();
    let run = replay_corpus(|| Ok(Box::new(SocketClient::connect(&endpoint)?)), space, traces, options);
    service.stop()?;
    run
}

/// Traces whose actions are all labelled benign.
pub fn benign_traces(traces: &[Trace]) -> Vec<Trace> {
    traces.iter().filter(|t| t.actions().all(|a| a.label == Label::Benign)).cloned().collect()
}

/// Runs each benign trace unguarded and then guarded in-process, with the
/// same simulated agent step before every action, and compares wall time.
pub fn measure_overhead(
    config: &GuardConfig,
    space: &ContextSpace,
    traces: &[Trace],
    agent_step: Duration,
) -> Result<Overhead, RunError> {
    let benign = benign_traces(traces);
    let options = RunOptions { agent_step, ..RunOptions::default() };
    let guard = Arc::new(Guard::new(config.clone()).map_err(|e| RunError::Guard(e.to_string()))?);
    let (mut guarded, mut unguarded, mut actions) = (Duration::ZERO, Duration::ZERO, 0);
    for trace in &benign {
        unguarded += run_unguarded(trace, &options);
        let mut backend = InProcess::new(guard.clone());
        guarded += run_trace(&mut backend, space, trace, &options)?.elapsed;
        actions += trace.actions().count();
    }
    Ok(Overhead::new(agent_step, actions, guarded, unguarded))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Simulated agent step used for the overhead comparison; zero skips it.
    pub agent_step_ms: u64,
    /// Also replay over a private local socket and report its latency.
    pub socket: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { agent_step_ms: 10, socket: true }
    }
}

/// The full benchmark report for one space and its traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullReport {
    #[serde(flatten)]
    pub report: BenchReport,
    #[serde(default)]
    pub socket_latency: Option<LatencyStats>,
}

pub fn bench(
    config: &GuardConfig,
    space: &ContextSpace,
    traces: &[Trace],
    options: &BenchOptions,
) -> Result<FullReport, RunError> {
    let run = replay_inproc(config, space, traces, &RunOptions::default())?;
    let overhead = match options.agent_step_ms {
        0 => None,
        ms => Some(measure_overhead(config, space, traces, Duration::from_millis(ms))?),
    };
    let socket_latency = if options.socket {
        Some(latency_stats(&replay_socket(config, space, traces, &RunOptions::default())?.latencies()))
    } else {
        None
    };
    Ok(FullReport {
        report: BenchReport { security: compute_metrics(&run.records), latency: latency_stats(&run.latencies()), overhead },
        socket_latency,
    })
}

/// Default system fixture location for a corpus space: `system.json` next
/// to the space file.
pub fn sibling_fixture(space_path: &std::path::Path) -> Option<PathBuf> {
    let p = space_path.with_file_name("system.json");
    p.exists().then_some(p)
}
