use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ctxguard_core::guard::{Guard, GuardConfig};
use ctxguard_core::model::{lint_space, parse_space, serialize_space, ContextSpace, Severity};
use ctxguard_core::verifier::read_event_log;
use ctxguard_harness::bench::{sibling_fixture, PrivateService};
use ctxguard_harness::{
    bench, compute_metrics, latency_stats, load_corpus, load_trace, run_trace, BenchOptions, InProcess, RunOptions,
    SocketClient,
};
use ctxguard_service::{Endpoint, Server, ServiceConfig};
use ctxguard_toolchain::inputs::{load_changelog, load_docs, load_manifest};
use ctxguard_toolchain::evolve::function_context_refs;
use ctxguard_toolchain::provider::provider_from_descriptor;
use ctxguard_toolchain::{analyze_logs, annotate, assemble_space, diff_paths, evolve_from_changelog, AnalysisConfig};
use ctxguard_toolchain::{GenConfig, ReasoningProvider, SpaceInput, StubProvider};

#[derive(Parser)]
#[command(name = "ctxguard", version, about = "Context-space tooling and guard service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProviderArgs {
    /// `stub`, `cmd:<shell command>` or an http(s) endpoint.
    #[arg(long, default_value = "stub")]
    provider: String,
    /// Extra canned stub responses merged over the bundled set.
    #[arg(long)]
    canned: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    retries: usize,
}

#[derive(Args)]
struct GuardArgs {
    /// Guard configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// System context fixture; defaults to `system.json` next to the space.
    #[arg(long)]
    system: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a context space.
    Lint { space: PathBuf },
    /// Summarize a space or print one function entry.
    Inspect {
        space: PathBuf,
        #[arg(long)]
        function: Option<String>,
    },
    /// Generate a space from function docs and/or a handler manifest.
    Gen {
        #[arg(long)]
        app: String,
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a changelog to a space, or mine an event log for suggestions.
    Evolve {
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, conflicts_with = "logs", requires = "space")]
        changelog: Option<PathBuf>,
        #[arg(long)]
        logs: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        threshold: usize,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the guard service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay one trace and print a line per action.
    Replay {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Use a running service at this socket path, or a private one when
        /// no path is given.
        #[arg(long, num_args = 0..=1, conflicts_with = "inproc")]
        socket: Option<Option<PathBuf>>,
        /// Replay against an in-process guard (the default).
        #[arg(long)]
        inproc: bool,
        #[command(flatten)]
        guard: GuardArgs,
    },
    /// Replay a directory of traces and write a metrics report.
    Bench {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Simulated agent step for the overhead comparison; 0 skips it.
        #[arg(long, default_value_t = 10)]
        agent_step_ms: u64,
        #[arg(long)]
        no_socket: bool,
        #[command(flatten)]
        guard: GuardArgs,
    },
}

type CliResult = Result<ExitCode, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn read_space(path: &Path) -> Result<ContextSpace, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_space(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(bytes).map_err(err),
    }
}

fn provider(args: &ProviderArgs) -> Result<Box<dyn ReasoningProvider>, String> {
    if args.provider == "stub" {
        let mut stub = StubProvider::bundled();
        if let Some(p) = &args.canned {
            stub = stub.merged(StubProvider::from_file(p).map_err(err)?);
        }
        return Ok(Box::new(stub));
    }
    provider_from_descriptor(&args.provider).map_err(err)
}

fn guard_config(args: &GuardArgs, space_path: &Path) -> Result<GuardConfig, String> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => GuardConfig::default(),
    };
    if let Some(s) = args.system.clone().or_else(|| sibling_fixture(space_path)) {
        config.system_fixture = Some(s);
    }
    Ok(config)
}

fn lint(space: &Path) -> CliResult {
    let s = read_space(space)?;
    let findings = lint_space(&s);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    println!("{}: {} error(s), {} warning(s)", space.display(), errors, findings.len() - errors);
    Ok(if errors == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn inspect(space: &Path, function: Option<&str>) -> CliResult {
    let s = read_space(space)?;
    if let Some(fid) = function {
        let f = s.function(fid).ok_or_else(|| format!("no function `{fid}`"))?;
        println!("{}", serde_json::to_string_pretty(f).map_err(err)?);
        for id in function_context_refs(f) {
            if let Some(meta) = s.contexts.get(&id) {
                println!("context {id}: {}", serde_json::to_string(meta).map_err(err)?);
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    println!("app {} version {}", s.app_id, s.version);
    println!("{} function(s), {} context(s)", s.function_count(), s.contexts.len());
    for (class, f) in s.iter_functions() {
        let rules: usize = f.policies.values().map(|p| p.rules.len()).sum();
        let level = serde_json::to_value(f.sec_level).map_err(err)?;
        println!(
            "  {}{} [{}] intents={} rules={}",
            class.map(|c| format!("{c}.")).unwrap_or_default(),
            f.function_id,
            level.as_str().unwrap_or("?"),
            f.intents.len(),
            rules
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn gen(app: &str, docs: Option<&Path>, manifest: Option<&Path>, p: &ProviderArgs, out: Option<&Path>) -> CliResult {
    let mut inputs = Vec::new();
    if let Some(d) = docs {
        inputs.push(SpaceInput::Docs(load_docs(d).map_err(err)?));
    }
    if let Some(m) = manifest {
        inputs.push(SpaceInput::Manifest(load_manifest(m).map_err(err)?));
    }
    if inputs.is_empty() {
        return Err("give --docs and/or --manifest".into());
    }
    let cfg = GenConfig { retries: p.retries, ..GenConfig::default() };
    let space = assemble_space(app, &inputs, provider(p)?.as_ref(), &cfg).map_err(err)?;
    write_out(out, &serialize_space(&space))?;
    Ok(ExitCode::SUCCESS)
}

fn evolve(
    space: Option<&Path>,
    changelog: Option<&Path>,
    logs: Option<&Path>,
    threshold: usize,
    p: &ProviderArgs,
    out: Option<&Path>,
) -> CliResult {
    match (changelog, logs) {
        (Some(c), None) => {
            let base = read_space(space.ok_or("--changelog needs --space")?)?;
            let cfg = GenConfig { retries: p.retries, ..GenConfig::default() };
            let log = load_changelog(c).map_err(err)?;
            let evolved = evolve_from_changelog(&base, &log, provider(p)?.as_ref(), &cfg).map_err(err)?;
            let (before, after) = (serialize_space(&base), serialize_space(&evolved));
            let a: serde_json::Value = serde_json::from_slice(&before).map_err(err)?;
            let b: serde_json::Value = serde_json::from_slice(&after).map_err(err)?;
            for path in diff_paths(&a, &b) {
                eprintln!("changed: {path}");
            }
            write_out(out, &after)?;
            Ok(ExitCode::SUCCESS)
        }
        (None, Some(l)) => {
            let text = std::fs::read_to_string(l).map_err(|e| format!("{}: {e}", l.display()))?;
            let events = read_event_log(&text).map_err(|e| format!("{}: {e}", l.display()))?;
            let mut suggestions = analyze_logs(&events, &AnalysisConfig { threshold, ..AnalysisConfig::default() });
            annotate(&mut suggestions, provider(p)?.as_ref(), p.retries);
            let mut doc = serde_json::to_vec_pretty(&suggestions).map_err(err)?;
            doc.push(b'\n');
            write_out(out, &doc)?;
            Ok(ExitCode::SUCCESS)
        }
        _ => Err("give exactly one of --changelog and --logs".into()),
    }
}

fn serve(config: Option<&Path>) -> CliResult {
    let config = match config {
        Some(p) => ServiceConfig::from_file(p).map_err(err)?,
        None => ServiceConfig::default(),
    };
    let server = Server::bind(&config).map_err(err)?;
    eprintln!("listening on {}", server.endpoint());
    server.run().map_err(err)?;
    Ok(ExitCode::SUCCESS)
}

fn replay(space_path: &Path, trace: &Path, socket: Option<Option<PathBuf>>, guard: &GuardArgs) -> CliResult {
    let space = read_space(space_path)?;
    let trace = load_trace(trace).map_err(err)?;
    let config = guard_config(guard, space_path)?;
    let options = RunOptions::default();
    let run = match socket {
        None => {
            let g = Arc::new(Guard::new(config).map_err(err)?);
            run_trace(&mut InProcess::new(g), &space, &trace, &options).map_err(err)?
        }
        Some(Some(path)) => {
            let mut client = SocketClient::connect(&Endpoint::Unix(path)).map_err(err)?;
            run_trace(&mut client, &space, &trace, &options).map_err(err)?
        }
        Some(None) => {
            let service = PrivateService::start(&config).map_err(err)?;
            let mut client = SocketClient::connect(&service.endpoint).map_err(err)?;
            let run = run_trace(&mut client, &space, &trace, &options);
            drop(client);
            service.stop().map_err(err)?;
            run.map_err(err)?
        }
    };
    for r in &run.records {
        let o = &r.outcome;
        println!(
            "step {:>2} {:<6} {:<6} {:<22} {:<8} -> {:<7}{}{}",
            r.step,
            serde_json::to_value(r.label).map_err(err)?.as_str().unwrap_or("?"),
            r.mode,
            o.function.as_deref().unwrap_or("-"),
            o.verdict,
            r.resolved,
            o.reason.as_deref().map(|x| format!(" ({x})")).unwrap_or_default(),
            match r.matched {
                Some(false) => "  MISMATCH",
                _ => "",
            }
        );
    }
    let metrics = compute_metrics(&run.records);
    let latency = latency_stats(&run.records.iter().map(|r| r.latency).collect::<Vec<_>>());
    println!(
        "asr={:.2} benign_allow_rate={:.2} expectations={}/{} median_pre_action_us={:.0}",
        metrics.asr, metrics.benign_allow_rate, metrics.expectations_matched, metrics.expectations, latency.median_us
    );
    Ok(if metrics.expectations_matched == metrics.expectations { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench_cmd(space_path: &Path, traces: &Path, report: &Path, agent_step_ms: u64, no_socket: bool, guard: &GuardArgs) -> CliResult {
    let space = read_space(space_path)?;
    let traces = load_corpus(traces).map_err(err)?;
    let config = guard_config(guard, space_path)?;
    let full = bench(&config, &space, &traces, &BenchOptions { agent_step_ms, socket: !no_socket }).map_err(err)?;
    let mut doc = serde_json::to_vec_pretty(&full).map_err(err)?;
    doc.push(b'\n');
    std::fs::write(report, doc).map_err(|e| format!("{}: {e}", report.display()))?;
    let s = &full.report.security;
    println!(
        "{} trace(s), {} action(s): asr={:.2} benign_allow_rate={:.2} expectations={}/{}",
        traces.len(),
        s.actions,
        s.asr,
        s.benign_allow_rate,
        s.expectations_matched,
        s.expectations
    );
    println!("in-process pre_action median {:.0} us, p95 {:.0} us", full.report.latency.median_us, full.report.latency.p95_us);
    if let Some(l) = &full.socket_latency {
        println!("socket pre_action median {:.0} us, p95 {:.0} us", l.median_us, l.p95_us);
    }
    if let Some(o) = &full.report.overhead {
        println!("overhead {:.2}% ({:.0} us per action over a {} ms agent step)", o.overhead_pct, o.added_per_action_us, o.agent_step_ms);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Lint { space } => lint(space),
        Command::Inspect { space, function } => inspect(space, function.as_deref()),
        Command::Gen { app, docs, manifest, provider, out } => {
            gen(app, docs.as_deref(), manifest.as_deref(), provider, out.as_deref())
        }
        Command::Evolve { space, changelog, logs, threshold, provider, out } => evolve(
            space.as_deref(),
            changelog.as_deref(),
            logs.as_deref(),
            *threshold,
            provider,
            out.as_deref(),
        ),
        Command::Serve { config } => serve(config.as_deref()),
        Command::Replay { space, trace, socket, inproc: _, guard } => replay(space, trace, socket.clone(), guard),
        Command::Bench { space, traces, report, agent_step_ms, no_socket, guard } => {
            bench_cmd(space, traces, report, *agent_step_ms, *no_socket, guard)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
