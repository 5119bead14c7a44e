use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use pta_cli::server::{serve, ManualClock, ServerState};
use pta_core::session::{parse_trace, replay, SessionAssets, SessionConfig, SessionParams};
use pta_core::{Input, Trace};
use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

const WAIT: Duration = Duration::from_secs(10);

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets").join(rel)
}

fn config() -> SessionConfig {
    SessionConfig::load(&asset("config/session.toml")).unwrap()
}

fn load_trace(name: &str) -> Trace {
    parse_trace(&std::fs::read_to_string(asset(&format!("traces/{name}.json"))).unwrap()).unwrap()
}

struct Harness {
    clock: ManualClock,
    url: String,
    out: tempfile::TempDir,
}

async fn start_server() -> Harness {
    let config = config();
    let clock = ManualClock::new();
    let out = tempfile::tempdir().unwrap();
    let state = ServerState::new(
        SessionAssets::load(&config).unwrap(),
        SessionParams::from(&config),
        Arc::new(clock.clone()),
    )
    .with_tick(Duration::from_millis(2))
    .with_out_root(out.path().to_path_buf());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/ws", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, Arc::new(state)));
    Harness { clock, url, out }
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

struct Client {
    ws: Socket,
}

impl Client {
    async fn connect(url: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        Self { ws }
    }

    async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.into())).await.unwrap();
    }

    async fn send(&mut self, frame: Value) {
        self.send_raw(&frame.to_string()).await;
    }

    async fn next(&mut self) -> Value {
        loop {
            let msg = tokio::time::timeout(WAIT, self.ws.next())
                .await
                .expect("frame in time")
                .unwrap()
                .unwrap();
            if let Message::Text(text) = msg {
                return serde_json::from_str(text.as_str()).unwrap();
            }
        }
    }

    /// Read until a frame matches, returning the frames read on the way.
    async fn until(&mut self, mut pred: impl FnMut(&Value) -> bool) -> Vec<Value> {
        let mut got = Vec::new();
        loop {
            let v = self.next().await;
            let done = pred(&v);
            got.push(v);
            if done {
                return got;
            }
        }
    }

    /// Send an input stamped `at_ms` and wait for the state it produces.
    async fn input_at(&mut self, clock: &ManualClock, at_ms: u64, frame: Value) -> Vec<Value> {
        clock.set(at_ms);
        self.send(frame).await;
        self.until(|v| v["type"] == "error" || (v["type"] == "session_state" && v["now_ms"] == at_ms))
            .await
    }

    async fn close(mut self) {
        self.ws.close(None).await.unwrap();
        while let Ok(Some(Ok(_))) = tokio::time::timeout(WAIT, self.ws.next()).await {}
    }
}

fn frame_for(input: &Input) -> Value {
    match input {
        Input::Choice(id) => json!({"type": "choice", "id": id}),
        Input::Teach(a) => json!({"type": "teach", "assignment": a}),
        Input::Idle => json!({"type": "idle_ack"}),
    }
}

async fn session_dir(out: &Path) -> PathBuf {
    let dir = out.join("session-001");
    let deadline = tokio::time::Instant::now() + WAIT;
    while !dir.join("trace.json").is_file() {
        assert!(tokio::time::Instant::now() < deadline, "session files not written");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    dir
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[tokio::test]
async fn start_replies_with_state() {
    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send(json!({"type": "start"})).await;
    let state = c.next().await;
    assert_eq!(state["type"], "session_state");
    assert_eq!(state["scene"], "town");
    assert!(!state["pending_choices"].as_array().unwrap().is_empty());
    assert_eq!(state["cycle_index"], 0);
}

#[tokio::test]
async fn frames_before_start_are_refused() {
    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send(json!({"type": "choice", "id": "go_banana_tree"})).await;
    let err = c.next().await;
    assert_eq!(err["type"], "error");
    assert_eq!(err["code"], "not_started");
}

#[tokio::test]
async fn malformed_frame_keeps_connection() {
    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send_raw(r#"{"type":"???"}"#).await;
    let err = c.next().await;
    assert_eq!(err["type"], "error");
    assert_eq!(err["code"], "malformed_frame");
    c.send_raw("not json at all").await;
    assert_eq!(c.next().await["type"], "error");
    c.send(json!({"type": "start"})).await;
    assert_eq!(c.next().await["type"], "session_state");
}

#[tokio::test]
async fn rejected_choice_gets_error_and_session_continues() {
    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send(json!({"type": "start"})).await;
    c.next().await;
    let frames = c.input_at(&h.clock, 500, json!({"type": "choice", "id": "nope"})).await;
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0]["code"], "input_rejected");
    // The session is untouched and still takes the offered choice.
    let frames = c
        .input_at(&h.clock, 700, json!({"type": "choice", "id": "go_banana_tree"}))
        .await;
    assert_eq!(frames.last().unwrap()["type"], "session_state");
    assert_ne!(frames.last().unwrap()["scene"], "town");
}

#[tokio::test]
async fn refusal_pushes_the_same_cue_as_replay() {
    let trace = load_trace("refuse_teaching");
    let expected = replay(
        SessionAssets::load(&config()).unwrap(),
        SessionParams::from(&config()),
        &trace,
    )
    .unwrap()
    .take_frames()
    .into_iter()
    .find(|f| f.kind() == "cue")
    .unwrap();

    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send(json!({"type": "start"})).await;
    c.next().await;
    for step in &trace.steps {
        c.input_at(&h.clock, step.at_ms, frame_for(&step.input)).await;
    }
    h.clock.set(30_000);
    let cue = c.until(|v| v["type"] == "cue").await.pop().unwrap();
    assert_eq!(cue, serde_json::to_value(&expected).unwrap());
    assert_eq!(cue["cue_id"], "not_teach");
}

/// Drive a live session with `trace`, then settle the clock and close.
async fn drive(trace: &Trace) -> (PathBuf, tempfile::TempDir) {
    let h = start_server().await;
    let mut c = Client::connect(&h.url).await;
    c.send(json!({"type": "start"})).await;
    c.next().await;
    for step in &trace.steps {
        let frames = c.input_at(&h.clock, step.at_ms, frame_for(&step.input)).await;
        assert_ne!(frames.last().unwrap()["type"], "error", "{frames:?}");
    }
    c.close().await;
    let dir = session_dir(h.out.path()).await;
    (dir, h.out)
}

fn settled(trace: &Trace) -> Trace {
    let mut trace = trace.clone();
    let last = trace.steps.last().map_or(0, |s| s.at_ms);
    trace.steps.push(pta_core::session::TraceStep {
        at_ms: last + 60_000,
        input: Input::Idle,
    });
    trace
}

#[tokio::test]
async fn transport_matches_replay_on_bundled_traces() {
    let config = config();
    for name in [
        "case1_not_learning",
        "case2_not_experimenting",
        "case3_distraction",
        "case4_teach_failure",
        "case5_teach_success",
        "refuse_teaching",
    ] {
        let trace = settled(&load_trace(name));
        let (dir, _out) = drive(&trace).await;
        let recorded = parse_trace(&read(&dir, "trace.json")).unwrap();
        assert_eq!(recorded, trace, "{name}");
        let headless = replay(
            SessionAssets::load(&config).unwrap(),
            SessionParams::from(&config),
            &trace,
        )
        .unwrap();
        assert_eq!(read(&dir, "events.jsonl"), headless.events_jsonl(), "{name}");
        assert_eq!(read(&dir, "traversal.jsonl"), headless.traversal_jsonl(), "{name}");

        // The settling step only advances the clock past the pending cycles.
        let plain = replay(
            SessionAssets::load(&config).unwrap(),
            SessionParams::from(&config),
            &load_trace(name),
        )
        .unwrap();
        assert_eq!(plain.traversal_jsonl(), headless.traversal_jsonl(), "{name}");
        assert_eq!(plain.events_jsonl(), headless.events_jsonl(), "{name}");
    }
}

/// Pick the next input from what the server currently offers, sometimes
/// sending something it will reject.
fn random_input(rng: &mut ChaCha8Rng, state: &Value, map: Option<&Value>) -> Value {
    if rng.random_bool(0.1) {
        return json!({"type": "choice", "id": "not_offered"});
    }
    if let Some(map) = map.filter(|m| m["editable"] == true) {
        let labels: Vec<&Value> = map["labels"].as_array().unwrap().iter().collect();
        let mut assignment = serde_json::Map::new();
        for blank in map["blanks"].as_array().unwrap() {
            assignment.insert(
                blank["id"].as_str().unwrap().to_string(),
                (*labels.choose(rng).unwrap()).clone(),
            );
        }
        return json!({"type": "teach", "assignment": assignment});
    }
    match state["pending_choices"].as_array().and_then(|c| c.choose(rng)) {
        Some(choice) if rng.random_bool(0.85) => json!({"type": "choice", "id": choice["id"]}),
        _ => json!({"type": "idle_ack"}),
    }
}

#[tokio::test]
async fn transport_matches_replay_on_random_walks() {
    let config = config();
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = start_server().await;
        let mut c = Client::connect(&h.url).await;
        c.send(json!({"type": "start"})).await;
        let mut state = c.next().await;
        let mut map: Option<Value> = None;
        let mut at = 0;
        for _ in 0..14 {
            at += rng.random_range(200..12_000);
            let frame = random_input(&mut rng, &state, map.as_ref());
            let frames = c.input_at(&h.clock, at, frame).await;
            for f in &frames {
                match f["type"].as_str() {
                    Some("session_state") => {
                        state = f.clone();
                        map = f.get("concept_map_view").filter(|v| !v.is_null()).cloned();
                    }
                    Some("concept_map") => map = Some(f.clone()),
                    _ => {}
                }
            }
        }
        c.input_at(&h.clock, at + 60_000, json!({"type": "idle_ack"})).await;
        c.close().await;
        let dir = session_dir(h.out.path()).await;
        let recorded = parse_trace(&read(&dir, "trace.json")).unwrap();
        let headless = replay(
            SessionAssets::load(&config).unwrap(),
            SessionParams::from(&config),
            &recorded,
        )
        .unwrap();
        assert!(!headless.cycles().is_empty(), "seed {seed}");
        assert_eq!(read(&dir, "events.jsonl"), headless.events_jsonl(), "seed {seed}");
        assert_eq!(read(&dir, "traversal.jsonl"), headless.traversal_jsonl(), "seed {seed}");
        assert_eq!(read(&dir, "report.json"), headless.report().to_json(), "seed {seed}");
    }
}
