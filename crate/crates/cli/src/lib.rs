//! `pta` command line: model validation, headless trace runs, one-off FCM
//! evaluation and the live-session server.

pub mod server;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use pta_core::fcm::StemKind;
use pta_core::session::{parse_trace, replay_partial, SessionAssets, SessionConfig, SessionError, SessionParams};
use pta_core::{load_goalnet, load_kb, parse_fcm, validate_goalnet, FcmModel};
use serde_json::json;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pta", version, about = "Persuasive teachable agent engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Goalnet,
    Fcm,
    Kb,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and print a JSON report.
    Validate {
        kind: ModelKind,
        path: PathBuf,
        /// FCM to cross-check a knowledge base against.
        #[arg(long)]
        fcm: Option<PathBuf>,
    },
    /// Replay a scripted trace and write the session files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an FCM with clamped leaf activations.
    FcmEval {
        #[arg(long)]
        fcm: PathBuf,
        /// JSON object of leaf id to activation, inline or as a file path.
        #[arg(long)]
        activations: String,
    },
    /// Serve live sessions over WebSocket at `/ws`.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        port: u16,
        /// Ticker interval in milliseconds.
        #[arg(long, default_value_t = 100)]
        tick_ms: u64,
        /// Where finished sessions are written. Defaults to the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Io { .. } | SessionError::Config(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

/// Parse `args` and run the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pta: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { kind, path, fcm } => validate(kind, &path, fcm.as_deref()),
        Command::Run { config, trace, out } => run(&config, &trace, out),
        Command::FcmEval { fcm, activations } => fcm_eval(&fcm, &activations),
        Command::Serve {
            config,
            port,
            tick_ms,
            out,
        } => serve(&config, port, tick_ms, out),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn validate(kind: ModelKind, path: &Path, fcm: Option<&Path>) -> Result<i32, CliError> {
    let report = match kind {
        ModelKind::Goalnet => match load_goalnet(path) {
            Ok(net) => {
                let report = validate_goalnet(&net);
                let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
                json!({ "kind": "goalnet", "name": net.name, "valid": report.is_valid(), "violations": violations })
            }
            Err(pta_core::goalnet::GoalNetError::Io { path, message }) => {
                return Err(CliError::Runtime(format!("cannot read {path}: {message}")))
            }
            Err(e) => json!({ "kind": "goalnet", "valid": false, "violations": [e.to_string()] }),
        },
        ModelKind::Fcm => match parse_fcm(&read(path)?) {
            Ok(model) => json!({
                "kind": "fcm",
                "valid": true,
                "concepts": model.len(),
                "leaves": model.leaf_ids().count(),
                "edges": model.edges.edge_count(),
                "decomposable": model.is_decomposable(),
                "violations": [],
            }),
            Err(e) => json!({ "kind": "fcm", "valid": false, "violations": [e.to_string()] }),
        },
        ModelKind::Kb => {
            let against = fcm.map(|p| read(p).map(|text| parse_fcm(&text))).transpose()?;
            let against = against
                .transpose()
                .map_err(|e| CliError::Invalid(format!("cross-check FCM is invalid: {e}")))?;
            let checked = load_kb(&read(path)?).and_then(|kb| {
                if let Some(model) = &against {
                    kb.cross_validate(model)?;
                }
                Ok(kb)
            });
            match checked {
                Ok(kb) => json!({
                    "kind": "kb",
                    "valid": true,
                    "concept_maps": kb.concept_maps.len(),
                    "cues": kb.cues.len(),
                    "cross_checked": against.is_some(),
                    "violations": [],
                }),
                Err(e) => json!({ "kind": "kb", "valid": false, "violations": [e.to_string()] }),
            }
        }
    };
    print_json(&report);
    Ok(if report["valid"] == true { EXIT_OK } else { EXIT_INVALID })
}

fn load_config(path: &Path) -> Result<SessionConfig, CliError> {
    SessionConfig::load(path).map_err(|e| match e {
        SessionError::Io { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })
}

fn run(config: &Path, trace: &Path, out: Option<PathBuf>) -> Result<i32, CliError> {
    let mut config = load_config(config)?;
    if let Some(out) = out {
        config.out_dir = out;
    }
    let trace = parse_trace(&read(trace)?).map_err(|e| CliError::Invalid(e.to_string()))?;
    let assets = SessionAssets::load(&config)?;
    let (session, outcome) = replay_partial(assets, SessionParams::from(&config), &trace);
    session
        .write_outputs(&config.out_dir)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = session.report();
    print_json(&json!({
        "completed": report.completed,
        "cycles": report.cycles.len(),
        "cues": report.cue_ids(),
        "scene": report.final_state.scene,
        "out_dir": config.out_dir,
    }));
    match outcome {
        Ok(()) => Ok(EXIT_OK),
        Err(e) => {
            eprintln!("pta: trace stopped early: {e}");
            Ok(EXIT_INVALID)
        }
    }
}

/// Inline JSON if it looks like an object, otherwise a path to one.
fn parse_activations(arg: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--activations: {e}")))
}

fn stem_value(model: &FcmModel, state: &pta_core::ActivationVector, kind: StemKind) -> Option<f64> {
    model.stem_index(kind).map(|i| state.value(i))
}

fn fcm_eval(fcm: &Path, activations: &str) -> Result<i32, CliError> {
    let leaves = parse_activations(activations)?;
    let model = parse_fcm(&read(fcm)?).map_err(|e| CliError::Invalid(e.to_string()))?;
    let res = model.evaluate(&leaves).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut out = json!({
        "final_state": res.final_state.to_map(&model),
        "rounds": res.rounds,
        "converged": res.converged,
        "cycle_detected": res.cycle_detected,
        "decomposed": res.stats.decomposed,
    });
    for (key, kind) in [
        ("motivation", StemKind::Motivation),
        ("ability", StemKind::Ability),
        ("peripheral_cue", StemKind::PeripheralCue),
    ] {
        if let Some(v) = stem_value(&model, &res.final_state, kind) {
            out[key] = json!(v);
        }
    }
    print_json(&out);
    Ok(EXIT_OK)
}

fn serve(config: &Path, port: u16, tick_ms: u64, out: Option<PathBuf>) -> Result<i32, CliError> {
    let config = load_config(config)?;
    let assets = SessionAssets::load(&config)?;
    let state = server::ServerState::new(
        assets,
        SessionParams::from(&config),
        Arc::new(server::SystemClock::new()),
    )
    .with_tick(Duration::from_millis(tick_ms.max(1)))
    .with_out_root(out.unwrap_or_else(|| config.out_dir.clone()));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind port {port}: {e}")))?;
        eprintln!(
            "pta: serving on ws://{}/ws",
            listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?
        );
        server::serve(listener, Arc::new(state))
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    Ok(EXIT_OK)
}
