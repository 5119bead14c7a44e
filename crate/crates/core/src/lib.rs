//! Persuasive teachable agent engine.
//!
//! The agent's behaviour is a goal net ([`goalnet`]) walked by the
//! [`interpreter`]. Task functions in [`control`] call into the reasoning
//! operations ([`reasoning`]), which read motivation and ability off a fuzzy
//! cognitive map ([`fcm`]) and consult the [`kb`]. [`session`] drives the
//! repeating main routine from student inputs on a virtual clock.

pub mod control;
pub mod events;
pub mod fcm;
pub mod goalnet;
pub mod interpreter;
pub mod kb;
pub mod protocol;
pub mod reasoning;
pub mod scenario;
mod schema;
pub mod session;

pub use control::{task_registry, CycleRecord, PtaControl};
pub use events::{Event, EventCategory, EventControl, EventType};
pub use fcm::{parse_fcm, threshold_trivalent, ActivationVector, FcmModel, FcmResult};
pub use goalnet::{load_goalnet, parse_goalnet, validate_goalnet, GoalNet, ValidationReport};
pub use interpreter::{DecisionTable, Interpreter, TaskRegistry, TraversalLog};
pub use kb::{load_kb, KnowledgeBase, PersuasionCue};
pub use protocol::{ClientFrame, ServerFrame, SessionState};
pub use reasoning::{ActionDirective, Baselines, ElmAssessment, ReasoningKind, Route};
pub use schema::DocumentError;
pub use session::{run_trace, Input, Session, SessionAssets, SessionConfig, SessionReport, Trace};
