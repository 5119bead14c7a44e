//! Goal Net models: states, transitions, arcs, branches and nested sub-nets.
//!
//! A goal net is a bipartite graph. States are goals and transitions carry the
//! ordered task list that must run to move from one state to the next. A
//! composite state is expanded by a sub-net, attached through a branch record
//! naming the sub-net's first and last states.
//!
//! Node ids are unique across the whole hierarchy, so a node id alone is
//! enough to locate a node and the net level that owns it.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{self, DocumentError};

/// Current on-disk format version.
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum GoalNetError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Atomic,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNode {
    pub id: String,
    pub name: String,
    pub kind: StateKind,
    pub is_start: bool,
    pub is_end: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Direct,
    Conditional,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionNode {
    pub id: String,
    pub name: String,
    pub kind: TransitionKind,
    /// Task function names, invoked in order when the transition fires.
    pub tasks: Vec<String>,
    /// Draw weights keyed by successor state id. Probabilistic transitions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
    /// Arrow style from the drawing tool. Recorded, never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub composite: String,
    pub first: String,
    pub last: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalNet {
    pub name: String,
    pub states: Vec<StateNode>,
    pub transitions: Vec<TransitionNode>,
    pub arcs: Vec<Arc>,
    pub branches: Vec<Branch>,
    pub subnets: BTreeMap<String, GoalNet>,
}

/// A node reference resolved against one net level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRef<'a> {
    State(&'a StateNode),
    Transition(&'a TransitionNode),
}

impl<'a> NodeRef<'a> {
    pub fn id(&self) -> &'a str {
        match self {
            NodeRef::State(s) => &s.id,
            NodeRef::Transition(t) => &t.id,
        }
    }
}

impl GoalNet {
    pub fn state(&self, id: &str) -> Option<&StateNode> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn transition(&self, id: &str) -> Option<&TransitionNode> {
        self.transitions.iter().find(|t| t.id == id)
    }

    /// Look up a node on this level only.
    pub fn node(&self, id: &str) -> Option<NodeRef<'_>> {
        self.state(id)
            .map(NodeRef::State)
            .or_else(|| self.transition(id).map(NodeRef::Transition))
    }

    pub fn start_state(&self) -> Option<&StateNode> {
        self.states.iter().find(|s| s.is_start)
    }

    pub fn end_state(&self) -> Option<&StateNode> {
        self.states.iter().find(|s| s.is_end)
    }

    /// The net level (this net or a nested sub-net) that declares `id`.
    pub fn level_of(&self, id: &str) -> Option<&GoalNet> {
        if self.node(id).is_some() {
            return Some(self);
        }
        self.subnets.values().find_map(|sub| sub.level_of(id))
    }

    /// Arc targets of `node` in document order.
    pub fn successors(&self, node: &str) -> Result<Vec<&str>, GoalNetError> {
        let level = self
            .level_of(node)
            .ok_or_else(|| GoalNetError::UnknownNode(node.to_string()))?;
        Ok(level
            .arcs
            .iter()
            .filter(|a| a.from == node)
            .map(|a| a.to.as_str())
            .collect())
    }

    /// Every `(transition id, task name)` pair in the hierarchy, depth first.
    pub fn task_bindings(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect_tasks(&mut out);
        out
    }

    fn collect_tasks<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        for t in &self.transitions {
            for task in &t.tasks {
                out.push((t.id.as_str(), task.as_str()));
            }
        }
        for sub in self.subnets.values() {
            sub.collect_tasks(out);
        }
    }

    /// Find a state anywhere in the hierarchy by display name.
    pub fn find_state_by_name(&self, name: &str) -> Option<&StateNode> {
        self.states
            .iter()
            .find(|s| s.name == name)
            .or_else(|| self.subnets.values().find_map(|sub| sub.find_state_by_name(name)))
    }

    /// Canonical serialization: pretty JSON, LF line endings, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u64,
            #[serde(flatten)]
            net: &'a GoalNet,
        }
        let mut out = serde_json::to_string_pretty(&Doc {
            version: FORMAT_VERSION,
            net: self,
        })
        .expect("goal net serialization is infallible");
        out.push('\n');
        out
    }
}

/// Parse a self-contained goal net document. Sub-nets must be inline.
pub fn parse_goalnet(document: &str) -> Result<GoalNet, GoalNetError> {
    parse_goalnet_with(document, &mut |reference: &str| {
        Err(GoalNetError::Document(DocumentError::schema(
            "/subnets",
            format!("sub-net reference `{reference}` cannot be resolved from text"),
        )))
    })
}

/// Parse a goal net whose sub-nets may be given as references (strings)
/// resolved through `resolve`.
pub fn parse_goalnet_with(
    document: &str,
    resolve: &mut dyn FnMut(&str) -> Result<String, GoalNetError>,
) -> Result<GoalNet, GoalNetError> {
    let value = schema::parse_value(document)?;
    net_from_value(&value, "", resolve)
}

/// Load a goal net from disk. String-valued sub-net entries are paths relative
/// to the referencing file.
pub fn load_goalnet(path: &Path) -> Result<GoalNet, GoalNetError> {
    let text = read(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut resolve = |reference: &str| read(&base.join(reference));
    parse_goalnet_with(&text, &mut resolve)
}

fn read(path: &Path) -> Result<String, GoalNetError> {
    std::fs::read_to_string(path).map_err(|e| GoalNetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn net_from_value(
    value: &Value,
    path: &str,
    resolve: &mut dyn FnMut(&str) -> Result<String, GoalNetError>,
) -> Result<GoalNet, GoalNetError> {
    let obj = schema::as_object(value, path)?;
    schema::expect_fields(
        obj,
        path,
        &["name", "states", "transitions", "arcs", "branches"],
        &["version", "subnets"],
    )?;
    if let Some(v) = obj.get("version") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(DocumentError::schema(
                schema::child(path, "version"),
                format!("unsupported version (expected {FORMAT_VERSION})"),
            )
            .into());
        }
    }
    schema::expect_each(obj, path, "states", &["id", "name", "kind", "is_start", "is_end"], &[])?;
    schema::expect_each(obj, path, "transitions", &["id", "name", "kind", "tasks"], &["weights"])?;
    schema::expect_each(obj, path, "arcs", &["from", "to"], &["style"])?;
    schema::expect_each(obj, path, "branches", &["composite", "first", "last"], &[])?;

    let field = |key: &str| obj[key].clone();
    let name: String = schema::from_value(field("name"), &schema::child(path, "name"))?;
    let states = schema::from_value(field("states"), &schema::child(path, "states"))?;
    let transitions = schema::from_value(field("transitions"), &schema::child(path, "transitions"))?;
    let arcs = schema::from_value(field("arcs"), &schema::child(path, "arcs"))?;
    let branches = schema::from_value(field("branches"), &schema::child(path, "branches"))?;

    let mut subnets = BTreeMap::new();
    if let Some(v) = obj.get("subnets") {
        let sub_path = schema::child(path, "subnets");
        for (key, entry) in schema::as_object(v, &sub_path)? {
            let entry_path = schema::child(&sub_path, key);
            let net = match entry {
                Value::String(reference) => {
                    let text = resolve(reference)?;
                    let nested = schema::parse_value(&text)?;
                    net_from_value(&nested, "", resolve)?
                }
                Value::Object(_) => net_from_value(entry, &entry_path, resolve)?,
                _ => return Err(DocumentError::schema(entry_path, "expected a sub-net object or reference").into()),
            };
            subnets.insert(key.clone(), net);
        }
    }

    Ok(GoalNet {
        name,
        states,
        transitions,
        arcs,
        branches,
        subnets,
    })
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    CompositeStartOrEnd,
    EmptyTaskName,
    WeightsMismatch,
    InvalidWeights,
    DanglingArc,
    NonBipartiteArc,
    StartCount,
    EndCount,
    MissingBranch,
    DuplicateBranch,
    BranchNotComposite,
    BranchEndpoint,
    MissingSubnet,
    OrphanSubnet,
    StateOutDegree,
    TransitionArity,
    Unreachable,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::CompositeStartOrEnd => "composite state marked start or end",
            ViolationKind::EmptyTaskName => "empty task name",
            ViolationKind::WeightsMismatch => "weights present iff probabilistic",
            ViolationKind::InvalidWeights => "invalid weights",
            ViolationKind::DanglingArc => "dangling arc",
            ViolationKind::NonBipartiteArc => "non-bipartite arc",
            ViolationKind::StartCount => "start state count",
            ViolationKind::EndCount => "end state count",
            ViolationKind::MissingBranch => "missing branch",
            ViolationKind::DuplicateBranch => "duplicate branch",
            ViolationKind::BranchNotComposite => "branch on non-composite state",
            ViolationKind::BranchEndpoint => "branch endpoint mismatch",
            ViolationKind::MissingSubnet => "missing sub-net",
            ViolationKind::OrphanSubnet => "sub-net without composite state",
            ViolationKind::StateOutDegree => "state out-degree",
            ViolationKind::TransitionArity => "transition arity",
            ViolationKind::Unreachable => "node not on a start-to-end path",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Name of the net level the violation was found in.
    pub net: String,
    pub nodes: Vec<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {} ({})",
            self.net,
            self.kind,
            self.nodes.join(", "),
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Enumerate every structural violation in `net` and its sub-nets.
pub fn validate_goalnet(net: &GoalNet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    count_ids(net, &mut seen);
    let mut dups: Vec<&str> = seen.iter().filter(|(_, n)| **n > 1).map(|(id, _)| *id).collect();
    dups.sort_unstable();
    for id in dups {
        report.violations.push(Violation {
            kind: ViolationKind::DuplicateId,
            net: net.name.clone(),
            nodes: vec![id.to_string()],
            detail: format!("declared {} times", seen[id]),
        });
    }
    validate_level(net, &mut report);
    report
}

fn count_ids<'a>(net: &'a GoalNet, seen: &mut HashMap<&'a str, usize>) {
    for id in net
        .states
        .iter()
        .map(|s| s.id.as_str())
        .chain(net.transitions.iter().map(|t| t.id.as_str()))
    {
        *seen.entry(id).or_default() += 1;
    }
    for sub in net.subnets.values() {
        count_ids(sub, seen);
    }
}

fn validate_level(net: &GoalNet, report: &mut ValidationReport) {
    let mut push = |kind, nodes: Vec<&str>, detail: String| {
        report.violations.push(Violation {
            kind,
            net: net.name.clone(),
            nodes: nodes.into_iter().map(str::to_string).collect(),
            detail,
        })
    };

    for s in &net.states {
        if s.kind == StateKind::Composite && (s.is_start || s.is_end) {
            push(ViolationKind::CompositeStartOrEnd, vec![&s.id], String::new());
        }
    }

    let starts: Vec<&str> = net
        .states
        .iter()
        .filter(|s| s.is_start)
        .map(|s| s.id.as_str())
        .collect();
    let ends: Vec<&str> = net.states.iter().filter(|s| s.is_end).map(|s| s.id.as_str()).collect();
    if starts.len() != 1 {
        push(
            ViolationKind::StartCount,
            starts.clone(),
            format!("expected 1, found {}", starts.len()),
        );
    }
    if ends.len() != 1 {
        push(
            ViolationKind::EndCount,
            ends.clone(),
            format!("expected 1, found {}", ends.len()),
        );
    }

    // Arc endpoints and bipartiteness.
    let is_state = |id: &str| net.state(id).is_some();
    let is_transition = |id: &str| net.transition(id).is_some();
    let mut valid_arcs: Vec<&Arc> = Vec::new();
    for a in &net.arcs {
        let known = |id: &str| is_state(id) || is_transition(id);
        if !known(&a.from) || !known(&a.to) {
            push(
                ViolationKind::DanglingArc,
                vec![&a.from, &a.to],
                "endpoint not declared on this level".into(),
            );
        } else if is_state(&a.from) == is_state(&a.to) {
            push(ViolationKind::NonBipartiteArc, vec![&a.from, &a.to], String::new());
        } else {
            valid_arcs.push(a);
        }
    }
    let out_of = |id: &str| -> Vec<&str> {
        valid_arcs
            .iter()
            .filter(|a| a.from == id)
            .map(|a| a.to.as_str())
            .collect()
    };

    for t in &net.transitions {
        if t.tasks.iter().any(|task| task.trim().is_empty()) {
            push(ViolationKind::EmptyTaskName, vec![&t.id], String::new());
        }
        let outs = out_of(&t.id);
        match t.kind {
            TransitionKind::Direct if outs.len() != 1 => push(
                ViolationKind::TransitionArity,
                vec![&t.id],
                format!("direct transition needs exactly 1 output, found {}", outs.len()),
            ),
            TransitionKind::Conditional | TransitionKind::Probabilistic if outs.len() < 2 => push(
                ViolationKind::TransitionArity,
                vec![&t.id],
                format!("decision transition needs more than 1 output, found {}", outs.len()),
            ),
            _ => {}
        }
        match (&t.weights, t.kind) {
            (Some(_), k) if k != TransitionKind::Probabilistic => push(
                ViolationKind::WeightsMismatch,
                vec![&t.id],
                "weights on non-probabilistic transition".into(),
            ),
            (None, TransitionKind::Probabilistic) => push(
                ViolationKind::WeightsMismatch,
                vec![&t.id],
                "probabilistic transition without weights".into(),
            ),
            (Some(w), TransitionKind::Probabilistic) => {
                let sum: f64 = w.values().sum();
                let keys: BTreeSet<&str> = w.keys().map(String::as_str).collect();
                let outs_set: BTreeSet<&str> = outs.iter().copied().collect();
                if w.values().any(|x| !x.is_finite() || *x < 0.0) || sum.is_nan() || sum <= 0.0 {
                    push(
                        ViolationKind::InvalidWeights,
                        vec![&t.id],
                        format!("weights must be nonnegative with positive sum, sum = {sum}"),
                    );
                } else if keys != outs_set {
                    push(
                        ViolationKind::InvalidWeights,
                        vec![&t.id],
                        "weight keys must equal the successor states".into(),
                    );
                }
            }
            _ => {}
        }
    }

    for s in &net.states {
        let outs = out_of(&s.id);
        if s.is_end && !outs.is_empty() {
            push(
                ViolationKind::StateOutDegree,
                vec![&s.id],
                "end state has outgoing arcs".into(),
            );
        } else if !s.is_end && outs.len() != 1 {
            push(
                ViolationKind::StateOutDegree,
                vec![&s.id],
                format!("state needs exactly 1 following transition, found {}", outs.len()),
            );
        }
    }

    // Branches and sub-nets.
    for s in net.states.iter().filter(|s| s.kind == StateKind::Composite) {
        let branches: Vec<&Branch> = net.branches.iter().filter(|b| b.composite == s.id).collect();
        match branches.len() {
            0 => push(ViolationKind::MissingBranch, vec![&s.id], String::new()),
            1 => {}
            n => push(ViolationKind::DuplicateBranch, vec![&s.id], format!("{n} branches")),
        }
        match net.subnets.get(&s.id) {
            None => push(ViolationKind::MissingSubnet, vec![&s.id], String::new()),
            Some(sub) => {
                for b in branches {
                    let first_ok = sub.start_state().is_some_and(|st| st.id == b.first);
                    let last_ok = sub.end_state().is_some_and(|st| st.id == b.last);
                    if !first_ok || !last_ok {
                        push(
                            ViolationKind::BranchEndpoint,
                            vec![&s.id, &b.first, &b.last],
                            "branch must name the sub-net's start and end states".into(),
                        );
                    }
                }
            }
        }
    }
    for b in &net.branches {
        if net.state(&b.composite).map(|s| s.kind) != Some(StateKind::Composite) {
            push(ViolationKind::BranchNotComposite, vec![&b.composite], String::new());
        }
    }
    for key in net.subnets.keys() {
        if net.state(key).map(|s| s.kind) != Some(StateKind::Composite) {
            push(ViolationKind::OrphanSubnet, vec![key], String::new());
        }
    }

    // Every node must lie on some start -> end path.
    if let (Some(start), Some(end)) = (net.start_state(), net.end_state()) {
        let forward = reach(&start.id, |id| {
            valid_arcs
                .iter()
                .filter(move |a| a.from == id)
                .map(|a| a.to.as_str())
                .collect()
        });
        let backward = reach(&end.id, |id| {
            valid_arcs
                .iter()
                .filter(move |a| a.to == id)
                .map(|a| a.from.as_str())
                .collect()
        });
        let ids = net
            .states
            .iter()
            .map(|s| s.id.as_str())
            .chain(net.transitions.iter().map(|t| t.id.as_str()));
        for id in ids {
            if !(forward.contains(id) && backward.contains(id)) {
                push(ViolationKind::Unreachable, vec![id], String::new());
            }
        }
    }

    for sub in net.subnets.values() {
        validate_level(sub, report);
    }
}

fn reach<'a>(from: &'a str, next: impl Fn(&'a str) -> Vec<&'a str>) -> HashSet<&'a str> {
    let mut seen = HashSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(id) = queue.pop_front() {
        for n in next(id) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}
