//! Live sessions over WebSocket.
//!
//! Each connection owns one [`Session`]. Client frames become the same
//! [`Input`]s a trace replay feeds in, stamped with the connection's clock.
//! A ticker runs the checks that fall due while the student is quiet.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use pta_core::protocol::parse_client_frame;
use pta_core::session::{SessionAssets, SessionError, SessionParams, TraceStep};
use pta_core::{ClientFrame, Input, ServerFrame, Session, Trace};
use tokio::net::TcpListener;

/// Milliseconds since some fixed origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
}

/// A clock that only moves when told to. Clones share the same time.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

pub struct ServerState {
    pub assets: SessionAssets,
    pub params: SessionParams,
    pub clock: Arc<dyn Clock>,
    /// Real-time interval between ticker wake-ups.
    pub tick: Duration,
    /// Each finished session is written to `<out_root>/session-<n>`.
    pub out_root: Option<PathBuf>,
    next_id: AtomicU64,
}

impl ServerState {
    pub fn new(assets: SessionAssets, params: SessionParams, clock: Arc<dyn Clock>) -> Self {
        Self {
            assets,
            params,
            clock,
            tick: Duration::from_millis(100),
            out_root: None,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_tick(mut self, tick: Duration) -> Self {
        self.tick = tick;
        self
    }

    pub fn with_out_root(mut self, dir: PathBuf) -> Self {
        self.out_root = Some(dir);
        self
    }
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

pub async fn serve(listener: TcpListener, state: Arc<ServerState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<ServerState>>) -> Response {
    ws.on_upgrade(move |socket| handle(socket, state))
}

struct Live {
    session: Session,
    origin: u64,
    trace: Trace,
}

struct Connection {
    state: Arc<ServerState>,
    live: Option<Live>,
}

impl Connection {
    fn now(&self, origin: u64) -> u64 {
        self.state.clock.now_ms().saturating_sub(origin)
    }

    fn on_text(&mut self, text: &str) -> Vec<ServerFrame> {
        let frame = match parse_client_frame(text) {
            Ok(f) => f,
            Err(e) => return vec![ServerFrame::error("malformed_frame", e.to_string())],
        };
        let input = match frame {
            ClientFrame::Start => {
                self.finish();
                let mut session = Session::new(self.state.assets.clone(), self.state.params);
                let frames = session.take_frames();
                self.live = Some(Live {
                    session,
                    origin: self.state.clock.now_ms(),
                    trace: Trace::default(),
                });
                return frames;
            }
            ClientFrame::Choice { id } => Input::Choice(id),
            ClientFrame::Teach { assignment } => Input::Teach(assignment),
            ClientFrame::IdleAck => Input::Idle,
        };
        let Some(origin) = self.live.as_ref().map(|l| l.origin) else {
            return vec![ServerFrame::error("not_started", "send a start frame first")];
        };
        let at_ms = self.now(origin);
        let live = self.live.as_mut().expect("checked above");
        let result = live.session.apply_input(at_ms, input.clone());
        let mut frames = live.session.take_frames();
        match result {
            Ok(()) => live.trace.steps.push(TraceStep { at_ms, input }),
            Err(e) => frames.push(error_frame(&e)),
        }
        frames
    }

    fn on_tick(&mut self) -> Vec<ServerFrame> {
        let Some(origin) = self.live.as_ref().map(|l| l.origin) else {
            return Vec::new();
        };
        let now = self.now(origin);
        let live = self.live.as_mut().expect("checked above");
        let result = live.session.advance_before(now);
        let mut frames = live.session.take_frames();
        if let Err(e) = result {
            frames.push(error_frame(&e));
        }
        frames
    }

    /// Write the current session's files, if an output root is set.
    fn finish(&mut self) {
        let (Some(live), Some(root)) = (self.live.take(), self.state.out_root.as_ref()) else {
            return;
        };
        let n = self.state.next_id.fetch_add(1, Ordering::SeqCst);
        let dir = root.join(format!("session-{n:03}"));
        let trace = serde_json::to_string_pretty(&live.trace).expect("trace serializes");
        let written = live.session.write_outputs(&dir).and_then(|()| {
            std::fs::write(dir.join("trace.json"), trace + "\n").map_err(|e| SessionError::Io {
                path: dir.display().to_string(),
                message: e.to_string(),
            })
        });
        if let Err(e) = written {
            eprintln!("pta serve: {e}");
        }
    }
}

fn error_frame(e: &SessionError) -> ServerFrame {
    let code = match e {
        SessionError::TraceInputMismatch { .. } => "input_rejected",
        SessionError::Event(_) => "clock",
        _ => "session_error",
    };
    ServerFrame::error(code, e.to_string())
}

async fn send_all(socket: &mut WebSocket, frames: Vec<ServerFrame>) -> bool {
    for frame in frames {
        let text = serde_json::to_string(&frame).expect("frame serializes");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn handle(mut socket: WebSocket, state: Arc<ServerState>) {
    let mut ticker = tokio::time::interval(state.tick);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut conn = Connection { state, live: None };
    loop {
        let frames = tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => conn.on_text(text.as_str()),
                Some(Ok(Message::Binary(_))) => vec![ServerFrame::error("malformed_frame", "binary frames are not supported")],
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            _ = ticker.tick() => conn.on_tick(),
        };
        if !send_all(&mut socket, frames).await {
            break;
        }
    }
    conn.finish();
}
