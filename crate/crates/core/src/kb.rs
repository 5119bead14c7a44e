//! Knowledge base: concept-map answer keys, learnt knowledge, the persuasion
//! cue store and the event-to-leaf factor map.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fcm::FcmModel;
use crate::schema::{self, DocumentError};

/// Id of the fallback cue every knowledge base must provide.
pub const DEFAULT_CUE_ID: &str = "default";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("invariant violated: {message} ({})", ids.join(", "))]
    Invariant { message: String, ids: Vec<String> },
    #[error("unknown concept map `{0}`")]
    UnknownMap(String),
    #[error("concept map `{map}` has no blank `{blank}`")]
    UnknownBlank { map: String, blank: String },
    #[error("concept map `{map}` has no label `{label}`")]
    UnknownLabel { map: String, label: String },
    #[error("cue selection needs low motivation or low ability")]
    PreconditionViolation,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl KbError {
    fn invariant(message: impl Into<String>, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        KbError::Invariant {
            message: message.into(),
            ids: ids.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blank {
    pub id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapSpec {
    pub id: String,
    pub blanks: Vec<Blank>,
    /// Draggable labels. May include distractors.
    pub labels: Vec<String>,
    pub answer_key: BTreeMap<String, String>,
}

/// Blank id to chosen label. A `None` or missing entry is an unfilled blank.
pub type Assignment = BTreeMap<String, Option<String>>;

impl ConceptMapSpec {
    pub fn has_blank(&self, id: &str) -> bool {
        self.blanks.iter().any(|b| b.id == id)
    }

    /// Blanks whose assigned label differs from the key, unfilled blanks
    /// included.
    pub fn grade(&self, assignment: &Assignment) -> BTreeSet<String> {
        self.answer_key
            .iter()
            .filter(|(blank, answer)| assignment.get(*blank).and_then(Option::as_deref) != Some(answer.as_str()))
            .map(|(blank, _)| blank.clone())
            .collect()
    }

    fn validate(&self) -> Result<(), KbError> {
        let mut ids = HashSet::new();
        for b in &self.blanks {
            if !ids.insert(b.id.as_str()) {
                return Err(KbError::invariant("duplicate blank id", [&self.id, &b.id]));
            }
        }
        for b in &self.blanks {
            match self.answer_key.get(&b.id) {
                None => return Err(KbError::invariant("answer key misses blank", [&self.id, &b.id])),
                Some(answer) if !self.labels.contains(answer) => {
                    return Err(KbError::invariant(
                        "answer is not one of the labels",
                        [&self.id, answer],
                    ))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.answer_key.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(KbError::invariant(
                "answer key names an unknown blank",
                [&self.id, extra],
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearntKnowledge {
    pub map_id: String,
    pub assignment: Assignment,
    /// Blanks found wrong by the most recent practice.
    pub error_blanks: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expression {
    Happy,
    Sad,
    Neutral,
    Encouraging,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueTrigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_motivation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_ability: Option<bool>,
}

impl CueTrigger {
    fn field_count(&self) -> usize {
        self.event_name.is_some() as usize
            + self.low_motivation.is_some() as usize
            + self.low_ability.is_some() as usize
    }

    /// Number of trigger fields, if every set field matches `ctx`.
    fn specificity(&self, ctx: &CueContext) -> Option<usize> {
        let event_ok = self.event_name.as_deref().is_none_or(|n| n == ctx.event_name);
        let mot_ok = self.low_motivation.is_none_or(|m| m == ctx.low_motivation);
        let abi_ok = self.low_ability.is_none_or(|a| a == ctx.low_ability);
        (event_ok && mot_ok && abi_ok).then(|| self.field_count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersuasionCue {
    pub id: String,
    #[serde(default)]
    pub trigger: CueTrigger,
    pub text: String,
    pub expression: Expression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueContext {
    pub event_name: String,
    pub low_motivation: bool,
    pub low_ability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafActivation {
    pub leaf: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMapping {
    pub event: String,
    pub activations: Vec<LeafActivation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub concept_maps: Vec<ConceptMapSpec>,
    #[serde(skip)]
    pub learnt: BTreeMap<String, LearntKnowledge>,
    pub cues: Vec<PersuasionCue>,
    pub factor_map: Vec<FactorMapping>,
}

/// Parse and validate a knowledge base document.
pub fn load_kb(document: &str) -> Result<KnowledgeBase, KbError> {
    let value = schema::parse_value(document)?;
    let obj = schema::as_object(&value, "")?;
    schema::expect_fields(obj, "", &["concept_maps", "cues", "factor_map"], &["description"])?;
    schema::expect_each(obj, "", "concept_maps", &["id", "blanks", "labels", "answer_key"], &[])?;
    schema::expect_each(obj, "", "cues", &["id", "text", "expression"], &["trigger"])?;
    schema::expect_each(obj, "", "factor_map", &["event", "activations"], &[])?;
    for (i, cue) in obj["cues"].as_array().into_iter().flatten().enumerate() {
        if let Some(trigger) = cue.get("trigger") {
            let path = format!("/cues/{i}/trigger");
            schema::expect_fields(
                schema::as_object(trigger, &path)?,
                &path,
                &[],
                &["event_name", "low_motivation", "low_ability"],
            )?;
        }
    }
    let kb = KnowledgeBase {
        concept_maps: schema::from_value(obj["concept_maps"].clone(), "/concept_maps")?,
        learnt: BTreeMap::new(),
        cues: schema::from_value(obj["cues"].clone(), "/cues")?,
        factor_map: schema::from_value(obj["factor_map"].clone(), "/factor_map")?,
    };
    kb.validate()?;
    Ok(kb)
}

impl KnowledgeBase {
    fn validate(&self) -> Result<(), KbError> {
        let mut map_ids = HashSet::new();
        for m in &self.concept_maps {
            if !map_ids.insert(m.id.as_str()) {
                return Err(KbError::invariant("duplicate concept map id", [&m.id]));
            }
            m.validate()?;
        }
        let mut cue_ids = HashSet::new();
        for c in &self.cues {
            if !cue_ids.insert(c.id.as_str()) {
                return Err(KbError::invariant("duplicate cue id", [&c.id]));
            }
            if c.id != DEFAULT_CUE_ID && c.trigger.field_count() == 0 {
                return Err(KbError::invariant("cue has no trigger field", [&c.id]));
            }
        }
        if !cue_ids.contains(DEFAULT_CUE_ID) {
            return Err(KbError::invariant("missing required cue", [DEFAULT_CUE_ID]));
        }
        let mut events = HashSet::new();
        for f in &self.factor_map {
            if !events.insert(f.event.as_str()) {
                return Err(KbError::invariant("duplicate factor map event", [&f.event]));
            }
            let mut leaves = HashSet::new();
            for a in &f.activations {
                if !leaves.insert(a.leaf.as_str()) {
                    return Err(KbError::invariant(
                        "leaf listed twice for one event",
                        [&f.event, &a.leaf],
                    ));
                }
                if !a.value.is_finite() || !(-1.0..=1.0).contains(&a.value) {
                    return Err(KbError::invariant(
                        format!("activation {} outside [-1, 1]", a.value),
                        [&f.event, &a.leaf],
                    ));
                }
            }
        }
        Ok(())
    }

    /// Check that every factor-map leaf is a leaf of `fcm`.
    pub fn cross_validate(&self, fcm: &FcmModel) -> Result<(), KbError> {
        for f in &self.factor_map {
            for a in &f.activations {
                match fcm.concept(&a.leaf) {
                    Some(c) if c.is_leaf() => {}
                    Some(_) => {
                        return Err(KbError::invariant(
                            "factor map targets a non-leaf concept",
                            [&f.event, &a.leaf],
                        ))
                    }
                    None => {
                        return Err(KbError::invariant(
                            "factor map references unknown leaf",
                            [&f.event, &a.leaf],
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn concept_map(&self, id: &str) -> Result<&ConceptMapSpec, KbError> {
        self.concept_maps
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| KbError::UnknownMap(id.to_string()))
    }

    pub fn cue(&self, id: &str) -> Option<&PersuasionCue> {
        self.cues.iter().find(|c| c.id == id)
    }

    /// Leaf activations contributed by one event, empty if unmapped.
    pub fn activations_for(&self, event: &str) -> &[LeafActivation] {
        self.factor_map
            .iter()
            .find(|f| f.event == event)
            .map(|f| f.activations.as_slice())
            .unwrap_or(&[])
    }

    /// Replace the learnt knowledge for `map_id`. The error set from the last
    /// practice is carried over until the next practice regrades it.
    pub fn save_learnt(&mut self, map_id: &str, assignment: Assignment) -> Result<&LearntKnowledge, KbError> {
        let map = self.concept_map(map_id)?;
        for (blank, label) in &assignment {
            if !map.has_blank(blank) {
                return Err(KbError::UnknownBlank {
                    map: map_id.to_string(),
                    blank: blank.clone(),
                });
            }
            if let Some(label) = label {
                if !map.labels.contains(label) {
                    return Err(KbError::UnknownLabel {
                        map: map_id.to_string(),
                        label: label.clone(),
                    });
                }
            }
        }
        let error_blanks = self
            .learnt
            .get(map_id)
            .map(|l| l.error_blanks.clone())
            .unwrap_or_default();
        self.learnt.insert(
            map_id.to_string(),
            LearntKnowledge {
                map_id: map_id.to_string(),
                assignment,
                error_blanks,
            },
        );
        Ok(&self.learnt[map_id])
    }

    pub fn learnt(&self, map_id: &str) -> Option<&LearntKnowledge> {
        self.learnt.get(map_id)
    }

    pub fn set_error_blanks(&mut self, map_id: &str, errors: BTreeSet<String>) -> Result<(), KbError> {
        let learnt = self
            .learnt
            .get_mut(map_id)
            .ok_or_else(|| KbError::UnknownMap(map_id.to_string()))?;
        learnt.error_blanks = errors;
        Ok(())
    }

    /// Most specific matching cue and its specificity. A cue matches when all
    /// of its trigger fields agree with `ctx`; ties go to the smaller id; the
    /// `default` cue (specificity 0) catches everything else.
    pub fn select_cue_scored(&self, ctx: &CueContext) -> Result<(&PersuasionCue, usize), KbError> {
        if !ctx.low_motivation && !ctx.low_ability {
            return Err(KbError::PreconditionViolation);
        }
        let best = self
            .cues
            .iter()
            .filter(|c| c.id != DEFAULT_CUE_ID)
            .filter_map(|c| c.trigger.specificity(ctx).map(|s| (c, s)))
            .min_by(|(a, sa), (b, sb)| sb.cmp(sa).then_with(|| a.id.cmp(&b.id)));
        match best {
            Some(hit) => Ok(hit),
            None => {
                let fallback = self
                    .cue(DEFAULT_CUE_ID)
                    .expect("validated knowledge base has a default cue");
                Ok((fallback, 0))
            }
        }
    }

    pub fn select_cue(&self, ctx: &CueContext) -> Result<&PersuasionCue, KbError> {
        self.select_cue_scored(ctx).map(|(cue, _)| cue)
    }

    pub fn learnt_to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.learnt).expect("learnt knowledge serializes");
        out.push('\n');
        out
    }

    /// Load learnt knowledge written by [`learnt_to_json`](Self::learnt_to_json),
    /// checking it against the loaded concept maps.
    pub fn load_learnt_json(&mut self, text: &str) -> Result<(), KbError> {
        let value = schema::parse_value(text)?;
        let learnt: BTreeMap<String, LearntKnowledge> = schema::from_value(value, "")?;
        for (map_id, l) in &learnt {
            let map = self.concept_map(map_id)?;
            if let Some(blank) = l.assignment.keys().chain(&l.error_blanks).find(|b| !map.has_blank(b)) {
                return Err(KbError::UnknownBlank {
                    map: map_id.clone(),
                    blank: blank.clone(),
                });
            }
        }
        self.learnt = learnt;
        Ok(())
    }

    pub fn write_learnt(&self, dir: &Path) -> Result<(), KbError> {
        let path = dir.join("learnt.json");
        std::fs::write(&path, self.learnt_to_json()).map_err(|e| KbError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read_learnt(&mut self, dir: &Path) -> Result<(), KbError> {
        let path = dir.join("learnt.json");
        let text = std::fs::read_to_string(&path).map_err(|e| KbError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.load_learnt_json(&text)
    }
}
