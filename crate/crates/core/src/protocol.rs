//! JSON frames exchanged with a live client, and the observable session state
//! they carry.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::kb::{Assignment, Blank, Expression};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceView {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueView {
    pub cue_id: String,
    pub text: String,
    pub expression: Expression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Meters {
    pub motivation: f64,
    pub ability: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMapView {
    pub map_id: String,
    pub blanks: Vec<Blank>,
    pub labels: Vec<String>,
    pub assignment: Assignment,
    pub error_blanks: BTreeSet<String>,
    /// True while the student may submit a teach frame.
    pub editable: bool,
}

/// What the student currently sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub scene: String,
    pub scene_text: String,
    pub pending_choices: Vec<ChoiceView>,
    pub meters: Option<Meters>,
    pub ta_panel: Option<CueView>,
    pub concept_map_view: Option<ConceptMapView>,
    pub cycle_index: u64,
    pub now_ms: u64,
}

impl SessionState {
    /// A dialogue choice or an editable concept map is waiting on the student.
    pub fn awaiting_input(&self) -> bool {
        !self.pending_choices.is_empty() || self.concept_map_view.as_ref().is_some_and(|v| v.editable)
    }
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Start,
    Choice { id: String },
    Teach { assignment: Assignment },
    IdleAck,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    SessionState(SessionState),
    Cue(CueView),
    ConceptMap(ConceptMapView),
    PracticeResult {
        success: bool,
        error_blanks: BTreeSet<String>,
    },
    Meters(Meters),
    Error {
        code: String,
        message: String,
    },
}

impl ServerFrame {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerFrame::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServerFrame::SessionState(_) => "session_state",
            ServerFrame::Cue(_) => "cue",
            ServerFrame::ConceptMap(_) => "concept_map",
            ServerFrame::PracticeResult { .. } => "practice_result",
            ServerFrame::Meters(_) => "meters",
            ServerFrame::Error { .. } => "error",
        }
    }
}

/// Parse one client frame.
pub fn parse_client_frame(text: &str) -> Result<ClientFrame, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_frames() {
        assert_eq!(parse_client_frame(r#"{"type":"start"}"#).unwrap(), ClientFrame::Start);
        assert_eq!(
            parse_client_frame(r#"{"type":"idle_ack"}"#).unwrap(),
            ClientFrame::IdleAck
        );
        assert_eq!(
            parse_client_frame(r#"{"type":"choice","id":"x"}"#).unwrap(),
            ClientFrame::Choice { id: "x".into() }
        );
        let teach = parse_client_frame(r#"{"type":"teach","assignment":{"b1":"high","b2":null}}"#).unwrap();
        let ClientFrame::Teach { assignment } = teach else {
            panic!()
        };
        assert_eq!(assignment["b1"].as_deref(), Some("high"));
        assert_eq!(assignment["b2"], None);
        assert!(parse_client_frame(r#"{"type":"???"}"#).is_err());
        assert!(parse_client_frame("not json").is_err());
    }

    #[test]
    fn server_frames_are_tagged() {
        let f = ServerFrame::PracticeResult {
            success: false,
            error_blanks: BTreeSet::from(["b2".to_string()]),
        };
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["type"], "practice_result");
        assert_eq!(v["error_blanks"][0], "b2");
        let m = serde_json::to_value(ServerFrame::Meters(Meters {
            motivation: -1.0,
            ability: 0.0,
        }))
        .unwrap();
        assert_eq!(m["type"], "meters");
        assert_eq!(m["motivation"], -1.0);
    }
}
