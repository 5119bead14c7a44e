//! Goal Net interpreter.
//!
//! Walks a [`GoalNet`] one node at a time. Landing on a state moves to its
//! single following transition. Firing a transition runs its task list
//! through the [`TaskRegistry`] and then picks the next state. A decision
//! node is resolved from the [`DecisionTable`], a probabilistic node by a
//! seeded weighted draw, and anything else directly. Entering a composite
//! state descends into its sub-net. Reaching the sub-net's end pops back and
//! continues after the composite.
//!
//! One [`Interpreter`] runs one cycle (start state to end state). Re-running
//! the main routine is the caller's job.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goalnet::{GoalNet, NodeRef, StateKind, TransitionKind};

pub const DEFAULT_STEP_LIMIT: usize = 10_000;

/// Error type task functions may return.
pub type TaskError = Box<dyn std::error::Error + Send + Sync>;

type TaskFn<C> = Box<dyn Fn(&mut C) -> Result<(), TaskError> + Send + Sync>;

/// Name-indexed table of task functions operating on a host context `C`.
pub struct TaskRegistry<C> {
    entries: BTreeMap<String, TaskFn<C>>,
}

impl<C> Default for TaskRegistry<C> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<C> fmt::Debug for TaskRegistry<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

impl<C> TaskRegistry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register `task` under `name`. Fails if the name is already taken.
    pub fn register<F>(&mut self, name: impl Into<String>, task: F) -> Result<(), InterpreterError>
    where
        F: Fn(&mut C) -> Result<(), TaskError> + Send + Sync + 'static,
    {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(InterpreterError::DuplicateTask(name));
        }
        self.entries.insert(name, Box::new(task));
        Ok(())
    }

    /// Builder-style [`register`](Self::register) for tables known to be
    /// free of duplicates.
    pub fn with<F>(mut self, name: &str, task: F) -> Self
    where
        F: Fn(&mut C) -> Result<(), TaskError> + Send + Sync + 'static,
    {
        self.register(name, task).expect("duplicate task name");
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Check that every task referenced by `net` is registered.
    pub fn check_coverage(&self, net: &GoalNet) -> Result<(), InterpreterError> {
        for (transition, task) in net.task_bindings() {
            if !self.contains(task) {
                return Err(InterpreterError::UnboundTask {
                    task: task.to_string(),
                    transition: transition.to_string(),
                });
            }
        }
        Ok(())
    }

    fn invoke(&self, name: &str, transition: &str, ctx: &mut C) -> Result<(), InterpreterError> {
        let task = self.entries.get(name).ok_or_else(|| InterpreterError::UnboundTask {
            task: name.to_string(),
            transition: transition.to_string(),
        })?;
        task(ctx).map_err(|source| InterpreterError::Task {
            task: name.to_string(),
            transition: transition.to_string(),
            source,
        })
    }
}

/// Chosen successor state for each decision node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTable {
    entries: BTreeMap<String, String>,
}

impl DecisionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, decision_node: impl Into<String>, state: impl Into<String>) {
        self.entries.insert(decision_node.into(), state.into());
    }

    pub fn get(&self, decision_node: &str) -> Option<&str> {
        self.entries.get(decision_node).map(String::as_str)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for DecisionTable {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

/// Supplies the decision table at the moment a decision node is resolved,
/// after that transition's tasks have run.
pub trait DecisionProvider<C> {
    fn table(&mut self, ctx: &C) -> DecisionTable;
}

impl<C, F> DecisionProvider<C> for F
where
    F: FnMut(&C) -> DecisionTable,
{
    fn table(&mut self, ctx: &C) -> DecisionTable {
        self(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    EnteredState,
    FiredTransition,
    InvokedTask { task: String },
    DecisionResolved { state: String },
    EnteredComposite,
    ExitedComposite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub node: String,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Append-only record of a traversal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraversalLog {
    entries: Vec<LogEntry>,
}

impl TraversalLog {
    fn push(&mut self, node: &str, event: LogEvent) {
        let step = self.entries.len() as u64;
        self.entries.push(LogEntry {
            step,
            node: node.to_string(),
            event,
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON object per line, LF terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<LogEntry>, _>>()?;
        Ok(Self { entries })
    }
}

#[derive(Debug, Error)]
pub enum InterpreterError {
    #[error("task `{task}` (transition `{transition}`) has no registered function")]
    UnboundTask { task: String, transition: String },
    #[error("task name `{0}` registered twice")]
    DuplicateTask(String),
    #[error("decision node `{node}` has no decision table entry")]
    MissingDecision { node: String },
    #[error("decision for `{node}` names `{state}`, which is not one of its successors")]
    InvalidDecision { node: String, state: String },
    #[error("no goal reached after {limit} steps")]
    StepLimitExceeded { limit: usize },
    #[error("malformed goal net: {0}")]
    MalformedNet(String),
    #[error("task `{task}` (transition `{transition}`) failed: {source}")]
    Task {
        task: String,
        transition: String,
        #[source]
        source: TaskError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Advanced,
    ReachedGoal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Frame {
    composite: String,
    resume: String,
}

/// Traversal state for one cycle over a goal net.
#[derive(Debug, Clone)]
pub struct Interpreter<'n> {
    net: &'n GoalNet,
    current: String,
    stack: Vec<Frame>,
    rng_seed: u64,
    rng: ChaCha8Rng,
    log: TraversalLog,
    step_limit: usize,
}

impl<'n> Interpreter<'n> {
    /// Load the top-level start state. Every task in `net` must be bound.
    pub fn start<C>(net: &'n GoalNet, registry: &TaskRegistry<C>, seed: u64) -> Result<Self, InterpreterError> {
        registry.check_coverage(net)?;
        let start = net
            .start_state()
            .ok_or_else(|| InterpreterError::MalformedNet(format!("net `{}` has no start state", net.name)))?;
        let mut log = TraversalLog::default();
        log.push(&start.id, LogEvent::EnteredState);
        Ok(Self {
            net,
            current: start.id.clone(),
            stack: Vec::new(),
            rng_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log,
            step_limit: DEFAULT_STEP_LIMIT,
        })
    }

    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn log(&self) -> &TraversalLog {
        &self.log
    }

    pub fn into_log(self) -> TraversalLog {
        self.log
    }

    /// True once the top-level end state has been entered.
    pub fn at_goal(&self) -> bool {
        self.stack.is_empty() && self.net.state(&self.current).is_some_and(|s| s.is_end)
    }

    fn active_level(&self) -> Result<&'n GoalNet, InterpreterError> {
        let mut level = self.net;
        for frame in &self.stack {
            level = level.subnets.get(&frame.composite).ok_or_else(|| {
                InterpreterError::MalformedNet(format!("composite `{}` has no sub-net", frame.composite))
            })?;
        }
        Ok(level)
    }

    /// Advance by one node.
    pub fn step<C, P>(
        &mut self,
        registry: &TaskRegistry<C>,
        ctx: &mut C,
        decisions: &mut P,
    ) -> Result<StepOutcome, InterpreterError>
    where
        P: DecisionProvider<C> + ?Sized,
    {
        if self.at_goal() {
            return Ok(StepOutcome::ReachedGoal);
        }
        let level = self.active_level()?;
        let node = level.node(&self.current).ok_or_else(|| {
            InterpreterError::MalformedNet(format!("current node `{}` not in active net", self.current))
        })?;
        match node {
            NodeRef::State(state) if state.is_end => {
                // End of a sub-net: resume after the composite in the parent.
                let frame = self.stack.pop().expect("top-level end handled by at_goal");
                self.log.push(&frame.composite, LogEvent::ExitedComposite);
                self.current = frame.resume;
            }
            NodeRef::State(state) => {
                let outs = outgoing(level, &state.id);
                let [next] = outs.as_slice() else {
                    return Err(InterpreterError::MalformedNet(format!(
                        "state `{}` has {} following transitions",
                        state.id,
                        outs.len()
                    )));
                };
                self.log.push(next, LogEvent::FiredTransition);
                self.current = next.to_string();
            }
            NodeRef::Transition(t) => {
                for task in &t.tasks {
                    self.log.push(&t.id, LogEvent::InvokedTask { task: task.clone() });
                    registry.invoke(task, &t.id, ctx)?;
                }
                let outs = outgoing(level, &t.id);
                let next = match (outs.len(), t.kind) {
                    (0, _) => {
                        return Err(InterpreterError::MalformedNet(format!(
                            "transition `{}` has no output state",
                            t.id
                        )))
                    }
                    (1, _) => outs[0].to_string(),
                    (_, TransitionKind::Probabilistic) => {
                        let chosen = self.draw(t.weights.as_ref(), &outs, &t.id)?;
                        self.log
                            .push(&t.id, LogEvent::DecisionResolved { state: chosen.clone() });
                        chosen
                    }
                    _ => {
                        let table = decisions.table(ctx);
                        let chosen = table
                            .get(&t.id)
                            .ok_or_else(|| InterpreterError::MissingDecision { node: t.id.clone() })?;
                        if !outs.contains(&chosen) {
                            return Err(InterpreterError::InvalidDecision {
                                node: t.id.clone(),
                                state: chosen.to_string(),
                            });
                        }
                        self.log.push(
                            &t.id,
                            LogEvent::DecisionResolved {
                                state: chosen.to_string(),
                            },
                        );
                        chosen.to_string()
                    }
                };
                self.enter(level, next)?;
            }
        }
        Ok(if self.at_goal() {
            StepOutcome::ReachedGoal
        } else {
            StepOutcome::Advanced
        })
    }

    fn enter(&mut self, level: &'n GoalNet, state_id: String) -> Result<(), InterpreterError> {
        let state = level
            .state(&state_id)
            .ok_or_else(|| InterpreterError::MalformedNet(format!("transition output `{state_id}` is not a state")))?;
        self.log.push(&state.id, LogEvent::EnteredState);
        self.current = state_id;
        if state.kind == StateKind::Composite {
            let sub = level
                .subnets
                .get(&state.id)
                .ok_or_else(|| InterpreterError::MalformedNet(format!("composite `{}` has no sub-net", state.id)))?;
            let sub_start = sub
                .start_state()
                .ok_or_else(|| InterpreterError::MalformedNet(format!("sub-net `{}` has no start state", sub.name)))?;
            self.log.push(&state.id, LogEvent::EnteredComposite);
            self.stack.push(Frame {
                composite: state.id.clone(),
                resume: state.id.clone(),
            });
            self.log.push(&sub_start.id, LogEvent::EnteredState);
            self.current = sub_start.id.clone();
        }
        Ok(())
    }

    fn draw(
        &mut self,
        weights: Option<&BTreeMap<String, f64>>,
        outs: &[&str],
        node: &str,
    ) -> Result<String, InterpreterError> {
        let weights = weights.ok_or_else(|| {
            InterpreterError::MalformedNet(format!("probabilistic transition `{node}` has no weights"))
        })?;
        let w: Vec<f64> = outs.iter().map(|s| weights.get(*s).copied().unwrap_or(0.0)).collect();
        let total: f64 = w.iter().sum();
        if total.is_nan() || total <= 0.0 || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(InterpreterError::MalformedNet(format!(
                "transition `{node}` has unusable weights"
            )));
        }
        let r = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (state, weight) in outs.iter().zip(&w) {
            acc += weight;
            if r < acc {
                return Ok(state.to_string());
            }
        }
        // r < total always; guards float rounding on the last bucket.
        let last = outs.iter().zip(&w).rev().find(|(_, w)| **w > 0.0).map(|(s, _)| *s);
        Ok(last.expect("positive total implies a positive weight").to_string())
    }

    /// Step until the top-level end state is reached and return the log.
    pub fn run_to_goal<C, P>(
        &mut self,
        registry: &TaskRegistry<C>,
        ctx: &mut C,
        decisions: &mut P,
    ) -> Result<&TraversalLog, InterpreterError>
    where
        P: DecisionProvider<C> + ?Sized,
    {
        let mut steps = 0usize;
        while !self.at_goal() {
            if steps >= self.step_limit {
                return Err(InterpreterError::StepLimitExceeded { limit: self.step_limit });
            }
            self.step(registry, ctx, decisions)?;
            steps += 1;
        }
        Ok(&self.log)
    }
}

fn outgoing<'a>(level: &'a GoalNet, id: &str) -> Vec<&'a str> {
    level
        .arcs
        .iter()
        .filter(|a| a.from == id)
        .map(|a| a.to.as_str())
        .collect()
}
