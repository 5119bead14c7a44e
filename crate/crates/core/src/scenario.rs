//! Scripted scenario: scenes, dialogue choices and the events each choice
//! raises. Stands in for the game world when driving a session.
//!
//! Document shape:
//!
//! ```json
//! {
//!   "name": "demo",
//!   "start_scene": "town",
//!   "scenes": [
//!     {
//!       "id": "town",
//!       "text": "You are in town.",
//!       "choices": [
//!         {"id": "talk", "text": "Talk", "next": "town",
//!          "emits": [{"name": "Learn Diffusion", "type": "dialogue"}]}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! A scene may carry a `teaching` block that opens a teaching opportunity
//! when entered. Choices in that scene may then set `"teaching": "accept"`
//! (opens the concept map for editing) or `"teaching": "refuse"`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventType;
use crate::schema::{self, DocumentError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("invariant violated: {message} ({})", ids.join(", "))]
    Invariant { message: String, ids: Vec<String> },
}

fn invariant(message: &str, ids: &[&str]) -> ScenarioError {
    ScenarioError::Invariant {
        message: message.to_string(),
        ids: ids.iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmittedEvent {
    pub name: String,
    #[serde(rename = "type")]
    pub event_type: EventType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachingChoice {
    Accept,
    Refuse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choice {
    pub id: String,
    pub text: String,
    pub next: String,
    #[serde(default)]
    pub emits: Vec<EmittedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teaching: Option<TeachingChoice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachingSpec {
    pub map: String,
    pub rejection_event: String,
    pub success_scene: String,
    pub retry_scene: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teaching: Option<TeachingSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub start_scene: String,
    pub scenes: Vec<Scene>,
}

impl Scenario {
    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.id == id)
    }

    /// Concept maps any scene can open.
    pub fn teaching_maps(&self) -> impl Iterator<Item = &str> {
        self.scenes
            .iter()
            .filter_map(|s| s.teaching.as_ref())
            .map(|t| t.map.as_str())
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids = HashSet::new();
        for s in &self.scenes {
            if !ids.insert(s.id.as_str()) {
                return Err(invariant("duplicate scene id", &[&s.id]));
            }
        }
        if !ids.contains(self.start_scene.as_str()) {
            return Err(invariant("unknown start scene", &[&self.start_scene]));
        }
        let mut choice_ids = HashSet::new();
        for s in &self.scenes {
            if let Some(t) = &s.teaching {
                for target in [&t.success_scene, &t.retry_scene] {
                    if !ids.contains(target.as_str()) {
                        return Err(invariant("teaching block names an unknown scene", &[&s.id, target]));
                    }
                }
            }
            for c in &s.choices {
                if !choice_ids.insert(c.id.as_str()) {
                    return Err(invariant("duplicate choice id", &[&c.id]));
                }
                if !ids.contains(c.next.as_str()) {
                    return Err(invariant("choice leads to an unknown scene", &[&c.id, &c.next]));
                }
                if c.teaching.is_some() && s.teaching.is_none() {
                    return Err(invariant("teaching choice outside a teaching scene", &[&c.id]));
                }
                if let Some(e) = c.emits.iter().find(|e| e.name.trim().is_empty()) {
                    return Err(invariant("emitted event has an empty name", &[&c.id, &e.name]));
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let value = schema::parse_value(document)?;
    schema::as_object(&value, "")?;
    let scenario: Scenario = schema::from_value(value, "")?;
    scenario.validate()?;
    Ok(scenario)
}
