//! Agent control: the context the goal-net tasks operate on, the task table
//! binding every task name to a reasoning operation, and one-cycle execution.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, EventControl};
use crate::fcm::FcmModel;
use crate::goalnet::GoalNet;
use crate::interpreter::{DecisionTable, Interpreter, InterpreterError, TaskError, TaskRegistry, TraversalLog};
use crate::kb::{Assignment, KnowledgeBase, PersuasionCue};
use crate::reasoning::{
    self, ActionDirective, Baselines, ElmAssessment, ReasoningError, ReasoningKind, Route, TeachingResponse,
};

/// Ids of the decision nodes in the bundled goal nets and of the states
/// each can choose.
pub mod nodes {
    pub const MAIN_DISPATCH: &str = "mr_t_dispatch";
    pub const TO_LEARN: &str = "mr_s_learn";
    pub const TO_PRACTICE: &str = "mr_s_practice";
    pub const TO_PERSUADE: &str = "mr_s_persuade";

    pub const PERSUASION_CHECK: &str = "pe_t_check";
    pub const PERSUASION_NEEDED: &str = "pe_s_needed";
    pub const PERSUASION_NOT_NEEDED: &str = "pe_s_not_needed";

    pub const RESPONSE_CHECK: &str = "te_t_check";
    pub const RESPONSE_ACCEPTED: &str = "te_s_accepted";
    pub const RESPONSE_REFUSED: &str = "te_s_refused";

    pub const SOLUTION_CHECK: &str = "pr_t_reasoning";
    pub const SOLUTION_CORRECT: &str = "pr_s_correct";
    pub const SOLUTION_WRONG: &str = "pr_s_wrong";

    /// (decision node, choosable states)
    pub const WIRING: [(&str, &[&str]); 4] = [
        (MAIN_DISPATCH, &[TO_LEARN, TO_PRACTICE, TO_PERSUADE]),
        (PERSUASION_CHECK, &[PERSUASION_NEEDED, PERSUASION_NOT_NEEDED]),
        (RESPONSE_CHECK, &[RESPONSE_ACCEPTED, RESPONSE_REFUSED]),
        (SOLUTION_CHECK, &[SOLUTION_CORRECT, SOLUTION_WRONG]),
    ];
}

/// Every task name the agent implements.
pub const TASK_NAMES: [&str; 18] = [
    "DetectEvent",
    "InterpretEvent",
    "SelectReasoning",
    "Finish",
    "RequireTeaching",
    "CheckResponse",
    "InitializeTeaching",
    "AcquireKnowledge",
    "SaveKnowledge",
    "GenerateRejectionEvent",
    "QueryKB",
    "Reasoning",
    "CarryOutSol",
    "GenerateWrongSolEvent",
    "FCMCalculation",
    "CheckMotAbi",
    "SelectCue",
    "ExecuteCue",
];

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("goal net is not wired for the agent: {0}")]
    Wiring(String),
    #[error(transparent)]
    Interpreter(#[from] InterpreterError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
}

/// Check that each decision node exists and can reach the states the agent
/// chooses between.
pub fn check_wiring(net: &GoalNet) -> Result<(), ControlError> {
    for (node, targets) in nodes::WIRING {
        let level = net
            .level_of(node)
            .ok_or_else(|| ControlError::Wiring(format!("decision node `{node}` not found")))?;
        let succ = level
            .successors(node)
            .map_err(|e| ControlError::Wiring(e.to_string()))?;
        if let Some(missing) = targets.iter().find(|t| !succ.contains(t)) {
            return Err(ControlError::Wiring(format!("`{node}` cannot reach `{missing}`")));
        }
    }
    Ok(())
}

/// Scratch state for one pass through the main routine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleState {
    pub batch: Vec<Event>,
    pub leaves: BTreeMap<String, f64>,
    pub reasoning: Option<ReasoningKind>,
    pub assessment: Option<ElmAssessment>,
    pub cue: Option<PersuasionCue>,
    pub response: Option<TeachingResponse>,
    pub assignment: Option<Assignment>,
    pub practice_map: Option<String>,
    pub error_blanks: Option<BTreeSet<String>>,
    pub directives: Vec<ActionDirective>,
    pub finished: usize,
}

/// Summary of one completed cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub batch: Vec<String>,
    pub batch_ids: Vec<u64>,
    pub reasoning: ReasoningKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assessment: Option<ElmAssessment>,
    pub directives: Vec<ActionDirective>,
}

/// Everything the task functions read and write.
#[derive(Debug, Clone)]
pub struct PtaControl {
    fcm: Arc<FcmModel>,
    pub kb: KnowledgeBase,
    pub events: EventControl,
    pub teaching: Option<reasoning::TeachingOpportunity>,
    pub baselines: Baselines,
    pub cycle: u64,
    pub state: CycleState,
    decisions: DecisionTable,
}

impl PtaControl {
    pub fn new(fcm: Arc<FcmModel>, kb: KnowledgeBase, events: EventControl, baselines: Baselines) -> Self {
        Self {
            fcm,
            kb,
            events,
            teaching: None,
            baselines,
            cycle: 0,
            state: CycleState::default(),
            decisions: DecisionTable::new(),
        }
    }

    pub fn fcm(&self) -> &FcmModel {
        &self.fcm
    }

    pub fn decisions(&self) -> &DecisionTable {
        &self.decisions
    }

    fn decide(&mut self, node: &str, state: &str) {
        self.decisions.set(node, state);
    }

    /// Run one main-routine pass over the currently pending events. The
    /// cycle counter advances only when the pass completes.
    pub fn run_cycle(
        &mut self,
        net: &GoalNet,
        registry: &TaskRegistry<PtaControl>,
        seed: u64,
    ) -> Result<(CycleRecord, TraversalLog), ControlError> {
        self.state = CycleState::default();
        self.decisions.clear();
        let mut interpreter = Interpreter::start(net, registry, seed)?;
        interpreter.run_to_goal(registry, self, &mut |c: &PtaControl| c.decisions.clone())?;
        let state = std::mem::take(&mut self.state);
        let record = CycleRecord {
            cycle: self.cycle,
            batch: state.batch.iter().map(|e| e.name.clone()).collect(),
            batch_ids: state.batch.iter().map(|e| e.id).collect(),
            reasoning: state
                .reasoning
                .ok_or_else(|| ControlError::Wiring("cycle finished without selecting a reasoning".into()))?,
            assessment: state.assessment,
            directives: state.directives,
        };
        self.cycle += 1;
        Ok((record, interpreter.into_log()))
    }

    fn opportunity(&self) -> Result<&reasoning::TeachingOpportunity, ReasoningError> {
        self.teaching
            .as_ref()
            .ok_or(ReasoningError::NoActiveTeachingOpportunity)
    }

    fn practice_map(&self) -> Result<String, ReasoningError> {
        let from_event = self
            .state
            .batch
            .first()
            .and_then(|e| e.attributes.get(reasoning::MAP_ATTRIBUTE))
            .cloned();
        from_event
            .or_else(|| self.teaching.as_ref().map(|t| t.map_id.clone()))
            .ok_or_else(|| ReasoningError::NoLearntKnowledge(String::new()))
    }
}

type Task = fn(&mut PtaControl) -> Result<(), ReasoningError>;

fn adapt(task: Task) -> impl Fn(&mut PtaControl) -> Result<(), TaskError> + Send + Sync + 'static {
    move |ctx| task(ctx).map_err(|e| Box::new(e) as TaskError)
}

/// Task table covering [`TASK_NAMES`].
pub fn task_registry() -> TaskRegistry<PtaControl> {
    let table: [(&str, Task); 18] = [
        ("DetectEvent", detect_event),
        ("InterpretEvent", interpret_event),
        ("SelectReasoning", select_reasoning),
        ("Finish", finish),
        ("RequireTeaching", require_teaching),
        ("CheckResponse", check_response),
        ("InitializeTeaching", initialize_teaching),
        ("AcquireKnowledge", acquire_knowledge),
        ("SaveKnowledge", save_knowledge),
        ("GenerateRejectionEvent", generate_rejection_event),
        ("QueryKB", query_kb),
        ("Reasoning", reason_solution),
        ("CarryOutSol", carry_out_sol),
        ("GenerateWrongSolEvent", generate_wrong_sol_event),
        ("FCMCalculation", fcm_calculation),
        ("CheckMotAbi", check_mot_abi),
        ("SelectCue", select_cue),
        ("ExecuteCue", execute_cue),
    ];
    let mut registry = TaskRegistry::new();
    for (name, task) in table {
        registry.register(name, adapt(task)).expect("task names are unique");
    }
    registry
}

fn detect_event(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let batch = ctx.events.poll(ctx.cycle);
    if batch.is_empty() {
        return Err(ReasoningError::EmptyBatch);
    }
    ctx.state.batch = batch;
    Ok(())
}

fn interpret_event(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    ctx.state.leaves = reasoning::leaf_activations(&ctx.kb, &ctx.state.batch);
    Ok(())
}

fn select_reasoning(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let kind = reasoning::select_reasoning(&ctx.state.batch)?;
    ctx.state.reasoning = Some(kind);
    let target = match kind {
        ReasoningKind::Teachability => nodes::TO_LEARN,
        ReasoningKind::Practicability => nodes::TO_PRACTICE,
        ReasoningKind::Persuasion => nodes::TO_PERSUADE,
    };
    ctx.decide(nodes::MAIN_DISPATCH, target);
    Ok(())
}

fn finish(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    ctx.state.finished += 1;
    Ok(())
}

fn fcm_calculation(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let assessment = reasoning::assess_leaves(&ctx.fcm, &ctx.state.leaves, ctx.baselines)?;
    ctx.state.assessment = Some(assessment);
    Ok(())
}

fn check_mot_abi(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let route = ctx.state.assessment.as_ref().map(|a| a.route);
    let target = match route {
        Some(Route::Peripheral) => nodes::PERSUASION_NEEDED,
        _ => nodes::PERSUASION_NOT_NEEDED,
    };
    ctx.decide(nodes::PERSUASION_CHECK, target);
    Ok(())
}

fn select_cue(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let assessment = ctx.state.assessment.as_ref().ok_or(ReasoningError::EmptyBatch)?;
    let cue = reasoning::choose_cue(&ctx.kb, &ctx.state.batch, assessment)?.clone();
    ctx.state.cue = Some(cue);
    Ok(())
}

fn execute_cue(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    if let Some(cue) = &ctx.state.cue {
        ctx.state.directives.push(ActionDirective::display(cue));
    }
    Ok(())
}

fn require_teaching(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let opportunity = ctx.opportunity()?;
    if opportunity.response.is_none() {
        return Err(ReasoningError::NoActiveTeachingOpportunity);
    }
    Ok(())
}

fn check_response(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let response = ctx
        .teaching
        .as_mut()
        .and_then(|t| t.response.take())
        .ok_or(ReasoningError::NoActiveTeachingOpportunity)?;
    let target = match response {
        TeachingResponse::Accepted(_) => nodes::RESPONSE_ACCEPTED,
        TeachingResponse::Refused => nodes::RESPONSE_REFUSED,
    };
    ctx.state.response = Some(response);
    ctx.decide(nodes::RESPONSE_CHECK, target);
    Ok(())
}

fn initialize_teaching(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx.opportunity()?.map_id.clone();
    let error_blanks = reasoning::prior_errors(&ctx.kb, &map_id);
    ctx.state
        .directives
        .push(ActionDirective::ShowConceptMap { map_id, error_blanks });
    Ok(())
}

fn acquire_knowledge(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    match ctx.state.response.take() {
        Some(TeachingResponse::Accepted(assignment)) => {
            ctx.state.assignment = Some(assignment);
            Ok(())
        }
        _ => Err(ReasoningError::NoActiveTeachingOpportunity),
    }
}

fn save_knowledge(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx.opportunity()?.map_id.clone();
    let assignment = ctx
        .state
        .assignment
        .take()
        .ok_or(ReasoningError::NoActiveTeachingOpportunity)?;
    reasoning::save_knowledge(&mut ctx.kb, &mut ctx.events, &map_id, assignment)?;
    Ok(())
}

fn generate_rejection_event(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let opportunity = ctx.opportunity()?.clone();
    reasoning::reject_teaching(&mut ctx.events, &opportunity)?;
    Ok(())
}

fn query_kb(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx.practice_map()?;
    if ctx.kb.learnt(&map_id).is_none() {
        return Err(ReasoningError::NoLearntKnowledge(map_id));
    }
    ctx.state.practice_map = Some(map_id);
    Ok(())
}

fn reason_solution(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx
        .state
        .practice_map
        .clone()
        .ok_or(ReasoningError::NoLearntKnowledge(String::new()))?;
    let errors = reasoning::grade_learnt(&mut ctx.kb, &map_id)?;
    let target = if errors.is_empty() {
        nodes::SOLUTION_CORRECT
    } else {
        nodes::SOLUTION_WRONG
    };
    ctx.state.error_blanks = Some(errors);
    ctx.decide(nodes::SOLUTION_CHECK, target);
    Ok(())
}

fn carry_out_sol(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx.state.practice_map.clone().unwrap_or_default();
    let directive = reasoning::carry_out_solution(&mut ctx.events, &map_id)?;
    ctx.state.directives.push(directive);
    Ok(())
}

fn generate_wrong_sol_event(ctx: &mut PtaControl) -> Result<(), ReasoningError> {
    let map_id = ctx.state.practice_map.clone().unwrap_or_default();
    let errors = ctx.state.error_blanks.clone().unwrap_or_default();
    let directive = reasoning::wrong_solution(&mut ctx.events, &map_id, errors)?;
    ctx.state.directives.push(directive);
    Ok(())
}
