//! Reasoning selection, motivation/ability assessment and the bodies of the
//! persuasion, teachability and practicability cycles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, EventCategory, EventControl, EventError, EventType};
use crate::fcm::{FcmError, FcmModel, StemKind};
use crate::kb::{Assignment, CueContext, Expression, KbError, KnowledgeBase, LearntKnowledge, PersuasionCue};

/// Administrative event raised when the student answers a teaching request.
pub const TEACHING_REQUEST_EVENT: &str = "Teaching Request";
/// Administrative event raised once taught knowledge has been saved.
pub const TEACHABILITY_EVENT: &str = "Teachability Event";
/// Administrative wrong-solution event.
pub const PRACTICABILITY_EVENT: &str = "Practicability Event";
pub const TEACH_SUCCESS_EVENT: &str = "Teach Success";
pub const TEACH_FAILURE_EVENT: &str = "Teach Failure";

/// Attribute naming the concept map an administrative teaching event refers to.
pub const MAP_ATTRIBUTE: &str = "map";

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("no events to reason about")]
    EmptyBatch,
    #[error("no active teaching opportunity")]
    NoActiveTeachingOpportunity,
    #[error("nothing has been taught for concept map `{0}`")]
    NoLearntKnowledge(String),
    #[error("fcm has no `{0}` stem")]
    MissingStem(&'static str),
    #[error(transparent)]
    Fcm(#[from] FcmError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningKind {
    Persuasion,
    Teachability,
    Practicability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub motivation_baseline: f64,
    pub ability_baseline: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            motivation_baseline: 1.0,
            ability_baseline: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Central,
    Peripheral,
}

impl Route {
    pub fn classify(motivation: f64, ability: f64, baselines: Baselines) -> Self {
        if motivation >= baselines.motivation_baseline && ability >= baselines.ability_baseline {
            Route::Central
        } else {
            Route::Peripheral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmAssessment {
    pub motivation: f64,
    pub ability: f64,
    /// Reported for diagnostics only; never drives the route.
    pub peripheral_cue: Option<f64>,
    pub route: Route,
    pub baselines: Baselines,
    pub rounds: usize,
    pub converged: bool,
    pub cycle_detected: bool,
}

impl ElmAssessment {
    pub fn low_motivation(&self) -> bool {
        self.motivation < self.baselines.motivation_baseline
    }

    pub fn low_ability(&self) -> bool {
        self.ability < self.baselines.ability_baseline
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionDirective {
    DisplayCue {
        cue_id: String,
        text: String,
        expression: Expression,
    },
    ShowConceptMap {
        map_id: String,
        error_blanks: BTreeSet<String>,
    },
    PracticeSuccessFeedback,
    PracticeFailureFeedback {
        error_blanks: BTreeSet<String>,
    },
    None,
}

impl ActionDirective {
    pub fn display(cue: &PersuasionCue) -> Self {
        ActionDirective::DisplayCue {
            cue_id: cue.id.clone(),
            text: cue.text.clone(),
            expression: cue.expression,
        }
    }
}

/// Pick the reasoning for a prioritized batch from its head event.
pub fn select_reasoning(batch: &[Event]) -> Result<ReasoningKind, ReasoningError> {
    let head = batch.first().ok_or(ReasoningError::EmptyBatch)?;
    Ok(match (head.event_type, head.name.as_str()) {
        (EventType::Administrative, TEACHING_REQUEST_EVENT) => ReasoningKind::Teachability,
        (EventType::Administrative, TEACHABILITY_EVENT) => ReasoningKind::Practicability,
        _ => ReasoningKind::Persuasion,
    })
}

/// Merge the factor-map activations of every batch event. When two events
/// touch the same leaf the larger magnitude wins; equal magnitudes keep the
/// more negative value.
pub fn leaf_activations(kb: &KnowledgeBase, batch: &[Event]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for event in batch {
        for a in kb.activations_for(&event.name) {
            out.entry(a.leaf.clone())
                .and_modify(|v| *v = merge_activation(*v, a.value))
                .or_insert(a.value);
        }
    }
    out
}

fn merge_activation(old: f64, new: f64) -> f64 {
    if new.abs() > old.abs() || (new.abs() == old.abs() && new < old) {
        new
    } else {
        old
    }
}

/// Evaluate the FCM on clamped leaves and classify the route.
pub fn assess_leaves(
    fcm: &FcmModel,
    leaves: &BTreeMap<String, f64>,
    baselines: Baselines,
) -> Result<ElmAssessment, ReasoningError> {
    let m = fcm
        .stem_index(StemKind::Motivation)
        .ok_or(ReasoningError::MissingStem("motivation"))?;
    let a = fcm
        .stem_index(StemKind::Ability)
        .ok_or(ReasoningError::MissingStem("ability"))?;
    let result = fcm.evaluate(leaves)?;
    let motivation = result.final_state.value(m);
    let ability = result.final_state.value(a);
    Ok(ElmAssessment {
        motivation,
        ability,
        peripheral_cue: fcm
            .stem_index(StemKind::PeripheralCue)
            .map(|i| result.final_state.value(i)),
        route: Route::classify(motivation, ability, baselines),
        baselines,
        rounds: result.rounds,
        converged: result.converged,
        cycle_detected: result.cycle_detected,
    })
}

pub fn assess(
    fcm: &FcmModel,
    kb: &KnowledgeBase,
    batch: &[Event],
    baselines: Baselines,
) -> Result<ElmAssessment, ReasoningError> {
    assess_leaves(fcm, &leaf_activations(kb, batch), baselines)
}

/// Most specific cue over all batch events; ties keep the earlier event.
pub fn choose_cue<'k>(
    kb: &'k KnowledgeBase,
    batch: &[Event],
    assessment: &ElmAssessment,
) -> Result<&'k PersuasionCue, ReasoningError> {
    let mut best: Option<(&PersuasionCue, usize)> = None;
    for event in batch {
        let ctx = CueContext {
            event_name: event.name.clone(),
            low_motivation: assessment.low_motivation(),
            low_ability: assessment.low_ability(),
        };
        let (cue, score) = kb.select_cue_scored(&ctx)?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((cue, score));
        }
    }
    best.map(|(cue, _)| cue).ok_or(ReasoningError::EmptyBatch)
}

/// Whole persuasion cycle: assess, then display a cue unless the student is
/// on the central route.
pub fn persuasion_cycle(
    fcm: &FcmModel,
    kb: &KnowledgeBase,
    batch: &[Event],
    baselines: Baselines,
) -> Result<(ElmAssessment, ActionDirective), ReasoningError> {
    let assessment = assess(fcm, kb, batch, baselines)?;
    let directive = match assessment.route {
        Route::Central => ActionDirective::None,
        Route::Peripheral => ActionDirective::display(choose_cue(kb, batch, &assessment)?),
    };
    Ok((assessment, directive))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachingResponse {
    Accepted(Assignment),
    Refused,
}

/// An open request for the student to teach one concept map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeachingOpportunity {
    pub map_id: String,
    /// Dialogue event raised when the student refuses.
    pub rejection_event: String,
    pub response: Option<TeachingResponse>,
}

impl TeachingOpportunity {
    pub fn new(map_id: impl Into<String>, rejection_event: impl Into<String>) -> Self {
        Self {
            map_id: map_id.into(),
            rejection_event: rejection_event.into(),
            response: None,
        }
    }
}

fn map_attribute(map_id: &str) -> BTreeMap<String, String> {
    BTreeMap::from([(MAP_ATTRIBUTE.to_string(), map_id.to_string())])
}

/// Raise the rejection event for a refused teaching request.
pub fn reject_teaching(events: &mut EventControl, opportunity: &TeachingOpportunity) -> Result<Event, ReasoningError> {
    Ok(events.create_event(
        &opportunity.rejection_event,
        EventType::Dialogue,
        EventCategory::LearningBehavior,
        BTreeMap::new(),
    )?)
}

/// Errors from the last practice, shown when teaching starts again.
pub fn prior_errors(kb: &KnowledgeBase, map_id: &str) -> BTreeSet<String> {
    kb.learnt(map_id).map(|l| l.error_blanks.clone()).unwrap_or_default()
}

/// Save taught knowledge and raise the event that triggers practice.
pub fn save_knowledge(
    kb: &mut KnowledgeBase,
    events: &mut EventControl,
    map_id: &str,
    assignment: Assignment,
) -> Result<LearntKnowledge, ReasoningError> {
    let learnt = kb.save_learnt(map_id, assignment)?.clone();
    events.create_event(
        TEACHABILITY_EVENT,
        EventType::Administrative,
        EventCategory::Administrative,
        map_attribute(map_id),
    )?;
    Ok(learnt)
}

/// Whole teaching cycle over the pending response of `opportunity`. The
/// response is consumed.
pub fn teachability_cycle(
    kb: &mut KnowledgeBase,
    events: &mut EventControl,
    opportunity: Option<&mut TeachingOpportunity>,
) -> Result<ActionDirective, ReasoningError> {
    let opportunity = opportunity.ok_or(ReasoningError::NoActiveTeachingOpportunity)?;
    match opportunity.response.take() {
        None => Err(ReasoningError::NoActiveTeachingOpportunity),
        Some(TeachingResponse::Refused) => {
            reject_teaching(events, opportunity)?;
            Ok(ActionDirective::None)
        }
        Some(TeachingResponse::Accepted(assignment)) => {
            let error_blanks = prior_errors(kb, &opportunity.map_id);
            save_knowledge(kb, events, &opportunity.map_id, assignment)?;
            Ok(ActionDirective::ShowConceptMap {
                map_id: opportunity.map_id.clone(),
                error_blanks,
            })
        }
    }
}

/// Grade learnt knowledge and record the error set on it.
pub fn grade_learnt(kb: &mut KnowledgeBase, map_id: &str) -> Result<BTreeSet<String>, ReasoningError> {
    let learnt = kb
        .learnt(map_id)
        .ok_or_else(|| ReasoningError::NoLearntKnowledge(map_id.to_string()))?;
    let errors = kb.concept_map(map_id)?.grade(&learnt.assignment);
    kb.set_error_blanks(map_id, errors.clone())?;
    Ok(errors)
}

pub fn carry_out_solution(events: &mut EventControl, map_id: &str) -> Result<ActionDirective, ReasoningError> {
    events.create_event(
        TEACH_SUCCESS_EVENT,
        EventType::TeachingFeedback,
        EventCategory::KnowledgeData,
        map_attribute(map_id),
    )?;
    Ok(ActionDirective::PracticeSuccessFeedback)
}

pub fn wrong_solution(
    events: &mut EventControl,
    map_id: &str,
    error_blanks: BTreeSet<String>,
) -> Result<ActionDirective, ReasoningError> {
    events.create_event(
        TEACH_FAILURE_EVENT,
        EventType::TeachingFeedback,
        EventCategory::KnowledgeData,
        map_attribute(map_id),
    )?;
    events.create_event(
        PRACTICABILITY_EVENT,
        EventType::Administrative,
        EventCategory::Administrative,
        map_attribute(map_id),
    )?;
    Ok(ActionDirective::PracticeFailureFeedback { error_blanks })
}

/// Whole practice cycle for `map_id`.
pub fn practicability_cycle(
    kb: &mut KnowledgeBase,
    events: &mut EventControl,
    map_id: &str,
) -> Result<ActionDirective, ReasoningError> {
    let errors = grade_learnt(kb, map_id)?;
    if errors.is_empty() {
        carry_out_solution(events, map_id)
    } else {
        wrong_solution(events, map_id, errors)
    }
}
