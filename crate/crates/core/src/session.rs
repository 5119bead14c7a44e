//! Session runtime: configuration, asset loading, the virtual-clock main loop
//! and headless trace replay.
//!
//! Scheduling: checks happen at every multiple of the checking period. An
//! input stamped `t` is applied after all checks strictly before `t` and
//! before the check at `t`. Each check ticks the inactivity timer and, if
//! events are pending, runs exactly one main-routine cycle over them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{self, ControlError, CycleRecord, PtaControl};
use crate::events::{EventCategory, EventControl, EventError, EventType, DEFAULT_INACTIVITY_TIMEOUT_MS};
use crate::fcm::{parse_fcm, FcmError, FcmModel};
use crate::goalnet::{load_goalnet, validate_goalnet, GoalNet, GoalNetError};
use crate::interpreter::{LogEntry, TaskRegistry};
use crate::kb::{load_kb, Assignment, KbError, KnowledgeBase, LearntKnowledge};
use crate::protocol::{ChoiceView, ConceptMapView, CueView, Meters, ServerFrame, SessionState};
use crate::reasoning::{self, ActionDirective, Baselines, TeachingOpportunity, TeachingResponse};
use crate::scenario::{parse_scenario, ScenarioError, TeachingChoice, TeachingSpec};
use crate::schema::{self, DocumentError};

pub const DEFAULT_CHECKING_PERIOD_MS: u64 = 5_000;

/// Checks run after the last trace step while events are still pending.
const MAX_DRAIN_CHECKS: usize = 64;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    GoalNet(#[from] GoalNetError),
    #[error("goal net `{name}` is invalid: {violations}")]
    InvalidGoalNet { name: String, violations: String },
    #[error(transparent)]
    Fcm(#[from] FcmError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("input at {at_ms} ms does not fit the session: {detail}")]
    TraceInputMismatch { at_ms: u64, detail: String },
    #[error("events still pending after {0} drain checks")]
    DrainLimit(usize),
}

fn io_error(path: &Path, e: std::io::Error) -> SessionError {
    SessionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), SessionError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    goalnet: PathBuf,
    fcm: PathBuf,
    kb: PathBuf,
    scenario: PathBuf,
    #[serde(default)]
    seed: u64,
    checking_period_ms: Option<u64>,
    inactivity_timeout_ms: Option<u64>,
    baselines: Option<Baselines>,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub goalnet_path: PathBuf,
    pub fcm_path: PathBuf,
    pub kb_path: PathBuf,
    pub scenario_path: PathBuf,
    pub seed: u64,
    pub checking_period_ms: u64,
    pub inactivity_timeout_ms: u64,
    pub baselines: Baselines,
    pub out_dir: PathBuf,
}

impl SessionConfig {
    /// Parse TOML config text. Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, SessionError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let config = SessionConfig {
            goalnet_path: resolve(file.goalnet),
            fcm_path: resolve(file.fcm),
            kb_path: resolve(file.kb),
            scenario_path: resolve(file.scenario),
            seed: file.seed,
            checking_period_ms: file.checking_period_ms.unwrap_or(DEFAULT_CHECKING_PERIOD_MS),
            inactivity_timeout_ms: file.inactivity_timeout_ms.unwrap_or(DEFAULT_INACTIVITY_TIMEOUT_MS),
            baselines: file.baselines.unwrap_or_default(),
            out_dir: resolve(file.out_dir.unwrap_or_else(|| PathBuf::from("session-out"))),
        };
        if config.checking_period_ms == 0 || config.inactivity_timeout_ms == 0 {
            return Err(SessionError::Config("durations must be positive".into()));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&read(path)?, base)
    }
}

/// Validated, shareable models for any number of sessions.
#[derive(Clone)]
pub struct SessionAssets {
    pub net: Arc<GoalNet>,
    pub fcm: Arc<FcmModel>,
    pub kb: Arc<KnowledgeBase>,
    pub scenario: Arc<crate::scenario::Scenario>,
    pub registry: Arc<TaskRegistry<PtaControl>>,
}

impl std::fmt::Debug for SessionAssets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionAssets")
            .field("net", &self.net.name)
            .field("scenario", &self.scenario.name)
            .finish_non_exhaustive()
    }
}

impl SessionAssets {
    pub fn load(config: &SessionConfig) -> Result<Self, SessionError> {
        let net = load_goalnet(&config.goalnet_path)?;
        let report = validate_goalnet(&net);
        if !report.is_valid() {
            return Err(SessionError::InvalidGoalNet {
                name: net.name.clone(),
                violations: report
                    .violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
        let registry = control::task_registry();
        registry.check_coverage(&net).map_err(ControlError::from)?;
        control::check_wiring(&net)?;

        let fcm = parse_fcm(&read(&config.fcm_path)?)?;
        let kb = load_kb(&read(&config.kb_path)?)?;
        kb.cross_validate(&fcm)?;
        let scenario = parse_scenario(&read(&config.scenario_path)?)?;
        for map in scenario.teaching_maps() {
            kb.concept_map(map)?;
        }
        Ok(Self {
            net: Arc::new(net),
            fcm: Arc::new(fcm),
            kb: Arc::new(kb),
            scenario: Arc::new(scenario),
            registry: Arc::new(registry),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub seed: u64,
    pub checking_period_ms: u64,
    pub inactivity_timeout_ms: u64,
    pub baselines: Baselines,
}

impl From<&SessionConfig> for SessionParams {
    fn from(c: &SessionConfig) -> Self {
        Self {
            seed: c.seed,
            checking_period_ms: c.checking_period_ms,
            inactivity_timeout_ms: c.inactivity_timeout_ms,
            baselines: c.baselines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Choice(String),
    Teach(Assignment),
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub at_ms: u64,
    pub input: Input,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

pub fn parse_trace(text: &str) -> Result<Trace, SessionError> {
    let value = schema::parse_value(text).map_err(|e| SessionError::Trace(e.to_string()))?;
    let trace: Trace = schema::from_value(value, "").map_err(|e: DocumentError| SessionError::Trace(e.to_string()))?;
    if let Some(w) = trace.steps.windows(2).find(|w| w[1].at_ms < w[0].at_ms) {
        return Err(SessionError::Trace(format!(
            "at_ms decreases from {} to {}",
            w[0].at_ms, w[1].at_ms
        )));
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalLine {
    pub cycle: u64,
    #[serde(flatten)]
    pub entry: LogEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub params: SessionParams,
    pub final_state: SessionState,
    pub cycles: Vec<CycleRecord>,
    pub learnt: BTreeMap<String, LearntKnowledge>,
    pub event_count: usize,
    pub completed: bool,
}

impl SessionReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Ids of every cue displayed, in order.
    pub fn cue_ids(&self) -> Vec<&str> {
        self.cycles
            .iter()
            .flat_map(|c| &c.directives)
            .filter_map(|d| match d {
                ActionDirective::DisplayCue { cue_id, .. } => Some(cue_id.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Mix the session seed with the cycle index.
pub fn cycle_seed(seed: u64, cycle: u64) -> u64 {
    seed ^ cycle.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One student's session on a virtual clock.
pub struct Session {
    assets: SessionAssets,
    params: SessionParams,
    agent: PtaControl,
    state: SessionState,
    teaching_spec: Option<TeachingSpec>,
    traversal: Vec<TraversalLine>,
    cycles: Vec<CycleRecord>,
    outbox: Vec<ServerFrame>,
    next_check: u64,
    completed: bool,
}

impl Session {
    pub fn new(assets: SessionAssets, params: SessionParams) -> Self {
        let agent = PtaControl::new(
            assets.fcm.clone(),
            (*assets.kb).clone(),
            EventControl::new(0, params.inactivity_timeout_ms),
            params.baselines,
        );
        let start = assets.scenario.start_scene.clone();
        let mut session = Self {
            assets,
            params,
            agent,
            state: SessionState {
                scene: String::new(),
                scene_text: String::new(),
                pending_choices: Vec::new(),
                meters: None,
                ta_panel: None,
                concept_map_view: None,
                cycle_index: 0,
                now_ms: 0,
            },
            teaching_spec: None,
            traversal: Vec::new(),
            cycles: Vec::new(),
            outbox: Vec::new(),
            next_check: params.checking_period_ms,
            completed: true,
        };
        session.enter_scene(&start);
        session.push_state();
        session
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn agent(&self) -> &PtaControl {
        &self.agent
    }

    pub fn cycles(&self) -> &[CycleRecord] {
        &self.cycles
    }

    pub fn traversal(&self) -> &[TraversalLine] {
        &self.traversal
    }

    pub fn now(&self) -> u64 {
        self.agent.events.now()
    }

    /// Frames produced since the last call.
    pub fn take_frames(&mut self) -> Vec<ServerFrame> {
        std::mem::take(&mut self.outbox)
    }

    pub fn events_jsonl(&self) -> String {
        self.agent.events.log().to_jsonl()
    }

    pub fn traversal_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.traversal {
            out.push_str(&serde_json::to_string(line).expect("traversal serializes"));
            out.push('\n');
        }
        out
    }

    fn push_state(&mut self) {
        self.state.now_ms = self.now();
        self.state.cycle_index = self.agent.cycle;
        self.outbox.push(ServerFrame::SessionState(self.state.clone()));
    }

    fn enter_scene(&mut self, id: &str) {
        let scene = self.assets.scenario.scene(id).expect("validated scenario").clone();
        self.state.scene = scene.id.clone();
        self.state.scene_text = scene.text.clone();
        self.state.pending_choices = scene
            .choices
            .iter()
            .map(|c| ChoiceView {
                id: c.id.clone(),
                text: c.text.clone(),
            })
            .collect();
        if let Some(spec) = scene.teaching {
            let already_open = self.agent.teaching.as_ref().is_some_and(|t| t.map_id == spec.map);
            if !already_open {
                self.agent.teaching = Some(TeachingOpportunity::new(&spec.map, &spec.rejection_event));
            }
            self.teaching_spec = Some(spec);
        }
    }

    fn concept_map_view(
        &self,
        map_id: &str,
        error_blanks: Option<std::collections::BTreeSet<String>>,
        editable: bool,
    ) -> ConceptMapView {
        let spec = self.agent.kb.concept_map(map_id).expect("validated map");
        let learnt = self.agent.kb.learnt(map_id);
        ConceptMapView {
            map_id: map_id.to_string(),
            blanks: spec.blanks.clone(),
            labels: spec.labels.clone(),
            assignment: learnt.map(|l| l.assignment.clone()).unwrap_or_default(),
            error_blanks: error_blanks.unwrap_or_else(|| reasoning::prior_errors(&self.agent.kb, map_id)),
            editable,
        }
    }

    fn mismatch(&self, at_ms: u64, detail: impl Into<String>) -> SessionError {
        SessionError::TraceInputMismatch {
            at_ms,
            detail: detail.into(),
        }
    }

    fn teaching_request(&mut self, map_id: &str) -> Result<(), SessionError> {
        self.agent.events.create_event(
            reasoning::TEACHING_REQUEST_EVENT,
            EventType::Administrative,
            EventCategory::Administrative,
            BTreeMap::from([(reasoning::MAP_ATTRIBUTE.to_string(), map_id.to_string())]),
        )?;
        Ok(())
    }

    /// Apply one student input at virtual time `at_ms`, running every check
    /// due strictly before it first. A rejected input leaves the session as
    /// it was apart from the clock.
    pub fn apply_input(&mut self, at_ms: u64, input: Input) -> Result<(), SessionError> {
        if at_ms < self.now() {
            return Err(EventError::ClockRegression {
                now: at_ms,
                last: self.now(),
            }
            .into());
        }
        self.run_checks_before(at_ms)?;
        self.agent.events.advance_to(at_ms)?;
        match input {
            Input::Idle => {}
            Input::Choice(id) => self.choose(at_ms, &id)?,
            Input::Teach(assignment) => self.teach(at_ms, assignment)?,
        }
        self.push_state();
        Ok(())
    }

    fn choose(&mut self, at_ms: u64, id: &str) -> Result<(), SessionError> {
        if !self.state.pending_choices.iter().any(|c| c.id == id) {
            return Err(self.mismatch(
                at_ms,
                format!("choice `{id}` is not offered in scene `{}`", self.state.scene),
            ));
        }
        let scene = self
            .assets
            .scenario
            .scene(&self.state.scene)
            .expect("current scene exists");
        let choice = scene
            .choices
            .iter()
            .find(|c| c.id == id)
            .expect("offered choice exists")
            .clone();
        for e in &choice.emits {
            self.agent
                .events
                .create_event(&e.name, e.event_type, e.event_type.category(), BTreeMap::new())?;
        }
        self.state.ta_panel = None;
        let map_id = self.agent.teaching.as_ref().map(|t| t.map_id.clone());
        match (choice.teaching, map_id) {
            (Some(TeachingChoice::Accept), Some(map_id)) => {
                self.enter_scene(&choice.next);
                let view = self.concept_map_view(&map_id, None, true);
                self.outbox.push(ServerFrame::ConceptMap(view.clone()));
                self.state.concept_map_view = Some(view);
                return Ok(());
            }
            (Some(TeachingChoice::Refuse), Some(map_id)) => {
                if let Some(t) = self.agent.teaching.as_mut() {
                    t.response = Some(TeachingResponse::Refused);
                }
                self.teaching_request(&map_id)?;
            }
            (Some(_), None) => return Err(self.mismatch(at_ms, "no teaching opportunity is open")),
            (None, _) => {}
        }
        self.enter_scene(&choice.next);
        Ok(())
    }

    fn teach(&mut self, at_ms: u64, assignment: Assignment) -> Result<(), SessionError> {
        let Some(view) = self.state.concept_map_view.as_ref().filter(|v| v.editable) else {
            return Err(self.mismatch(at_ms, "no concept map is open for teaching"));
        };
        let map_id = view.map_id.clone();
        let spec = self.agent.kb.concept_map(&map_id)?;
        for (blank, label) in &assignment {
            if !spec.has_blank(blank) {
                return Err(self.mismatch(at_ms, format!("unknown blank `{blank}`")));
            }
            if let Some(label) = label.as_ref().filter(|l| !spec.labels.contains(l)) {
                return Err(self.mismatch(at_ms, format!("unknown label `{label}`")));
            }
        }
        if let Some(t) = self.agent.teaching.as_mut() {
            t.response = Some(TeachingResponse::Accepted(assignment.clone()));
        }
        self.teaching_request(&map_id)?;
        if let Some(v) = self.state.concept_map_view.as_mut() {
            v.assignment = assignment;
            v.editable = false;
        }
        Ok(())
    }

    fn run_checks_before(&mut self, t: u64) -> Result<(), SessionError> {
        while self.next_check < t {
            self.check()?;
        }
        Ok(())
    }

    /// Run every check up to and including `t`.
    pub fn advance_to(&mut self, t: u64) -> Result<(), SessionError> {
        while self.next_check <= t {
            self.check()?;
        }
        Ok(())
    }

    /// Advance by the time the clock has been idle, as a live client does.
    pub fn advance_before(&mut self, t: u64) -> Result<(), SessionError> {
        self.run_checks_before(t)
    }

    fn check(&mut self) -> Result<(), SessionError> {
        let t = self.next_check;
        self.next_check += self.params.checking_period_ms;
        self.agent.events.tick(t)?;
        if !self.agent.events.pending().is_empty() {
            self.run_cycle()?;
        }
        Ok(())
    }

    fn run_cycle(&mut self) -> Result<(), SessionError> {
        let seed = cycle_seed(self.params.seed, self.agent.cycle);
        let (record, log) = self.agent.run_cycle(&self.assets.net, &self.assets.registry, seed)?;
        self.traversal.extend(log.entries().iter().map(|entry| TraversalLine {
            cycle: record.cycle,
            entry: entry.clone(),
        }));
        if let Some(a) = &record.assessment {
            let meters = Meters {
                motivation: a.motivation,
                ability: a.ability,
            };
            self.state.meters = Some(meters);
            self.outbox.push(ServerFrame::Meters(meters));
        }
        for directive in &record.directives {
            self.apply_directive(directive);
        }
        self.cycles.push(record);
        self.push_state();
        Ok(())
    }

    fn apply_directive(&mut self, directive: &ActionDirective) {
        match directive {
            ActionDirective::DisplayCue {
                cue_id,
                text,
                expression,
            } => {
                let cue = CueView {
                    cue_id: cue_id.clone(),
                    text: text.clone(),
                    expression: *expression,
                };
                self.state.ta_panel = Some(cue.clone());
                self.outbox.push(ServerFrame::Cue(cue));
            }
            ActionDirective::ShowConceptMap { map_id, error_blanks } => {
                let view = self.concept_map_view(map_id, Some(error_blanks.clone()), false);
                self.outbox.push(ServerFrame::ConceptMap(view.clone()));
                self.state.concept_map_view = Some(view);
            }
            ActionDirective::PracticeSuccessFeedback => {
                self.outbox.push(ServerFrame::PracticeResult {
                    success: true,
                    error_blanks: Default::default(),
                });
                self.state.concept_map_view = None;
                self.agent.teaching = None;
                if let Some(spec) = self.teaching_spec.take() {
                    self.enter_scene(&spec.success_scene);
                }
            }
            ActionDirective::PracticeFailureFeedback { error_blanks } => {
                self.outbox.push(ServerFrame::PracticeResult {
                    success: false,
                    error_blanks: error_blanks.clone(),
                });
                self.state.concept_map_view = None;
                if let Some(spec) = self.teaching_spec.clone() {
                    self.enter_scene(&spec.retry_scene);
                }
            }
            ActionDirective::None => {}
        }
    }

    /// Keep checking until nothing is pending.
    pub fn drain(&mut self) -> Result<(), SessionError> {
        for _ in 0..MAX_DRAIN_CHECKS {
            if self.agent.events.pending().is_empty() {
                return Ok(());
            }
            self.check()?;
        }
        if self.agent.events.pending().is_empty() {
            Ok(())
        } else {
            Err(SessionError::DrainLimit(MAX_DRAIN_CHECKS))
        }
    }

    pub fn report(&self) -> SessionReport {
        let mut final_state = self.state.clone();
        final_state.now_ms = self.now();
        final_state.cycle_index = self.agent.cycle;
        SessionReport {
            params: self.params,
            final_state,
            cycles: self.cycles.clone(),
            learnt: self.agent.kb.learnt.clone(),
            event_count: self.agent.events.log().all().len(),
            completed: self.completed,
        }
    }

    /// Write `events.jsonl`, `traversal.jsonl`, `report.json`, `learnt.json`
    /// and a `kb.json` snapshot into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), SessionError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write(&dir.join("events.jsonl"), &self.events_jsonl())?;
        write(&dir.join("traversal.jsonl"), &self.traversal_jsonl())?;
        write(&dir.join("report.json"), &self.report().to_json())?;
        self.agent.kb.write_learnt(dir)?;
        let mut kb = serde_json::to_string_pretty(&self.agent.kb).expect("kb serializes");
        kb.push('\n');
        write(&dir.join("kb.json"), &kb)
    }
}

/// Replay `trace` on fresh assets without touching the file system.
pub fn replay(assets: SessionAssets, params: SessionParams, trace: &Trace) -> Result<Session, SessionError> {
    let (session, outcome) = replay_partial(assets, params, trace);
    outcome.map(|()| session)
}

/// Like [`replay`], but keeps the session when a step fails. The session is
/// then marked incomplete and holds everything up to the failing step.
pub fn replay_partial(
    assets: SessionAssets,
    params: SessionParams,
    trace: &Trace,
) -> (Session, Result<(), SessionError>) {
    let mut session = Session::new(assets, params);
    let outcome = trace
        .steps
        .iter()
        .try_for_each(|step| session.apply_input(step.at_ms, step.input.clone()))
        .and_then(|()| session.drain());
    if outcome.is_err() {
        session.completed = false;
    }
    (session, outcome)
}

/// Load `config`, replay `trace` and write the session files to the
/// configured output directory.
pub fn run_trace(config: &SessionConfig, trace: &Trace) -> Result<SessionReport, SessionError> {
    let assets = SessionAssets::load(config)?;
    let session = replay(assets, config.into(), trace)?;
    session.write_outputs(&config.out_dir)?;
    Ok(session.report())
}
