//! Event creation, logging, prioritized batching and the inactivity timer.
//!
//! All timing uses virtual milliseconds supplied by the caller, so a replayed
//! session sees exactly the same event stream as the original.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inactivity timeout: five minutes.
pub const DEFAULT_INACTIVITY_TIMEOUT_MS: u64 = 300_000;

/// Name of the event emitted when the inactivity timer fires.
pub const TIME_OUT_EVENT: &str = "Doing Nothing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Dialogue,
    Location,
    Time,
    ItemCollection,
    MissionFulfillment,
    ErrorCommitment,
    TeachingFeedback,
    Administrative,
}

impl EventType {
    /// Processing priority; lower is served first.
    pub fn priority(self) -> u8 {
        match self {
            EventType::Administrative => 0,
            EventType::TeachingFeedback => 1,
            EventType::ErrorCommitment => 2,
            EventType::Dialogue => 3,
            EventType::MissionFulfillment => 4,
            EventType::ItemCollection => 5,
            EventType::Location => 6,
            EventType::Time => 7,
        }
    }

    /// The only category each event type may be filed under.
    pub fn category(self) -> EventCategory {
        match self {
            EventType::Dialogue | EventType::Location | EventType::Time => EventCategory::LearningBehavior,
            EventType::ItemCollection | EventType::MissionFulfillment => EventCategory::LearningAchievement,
            EventType::ErrorCommitment | EventType::TeachingFeedback => EventCategory::KnowledgeData,
            EventType::Administrative => EventCategory::Administrative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    LearningBehavior,
    LearningAchievement,
    KnowledgeData,
    Administrative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: u64,
    pub name: String,
    pub event_type: EventType,
    pub category: EventCategory,
    /// Virtual-clock milliseconds.
    pub timestamp: u64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl Event {
    fn sort_key(&self) -> (u8, u64) {
        (self.event_type.priority(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event type {event_type:?} cannot be filed under {category:?}")]
    TaxonomyViolation {
        event_type: EventType,
        category: EventCategory,
    },
    #[error("clock moved backwards: {now} < {last}")]
    ClockRegression { now: u64, last: u64 },
}

/// Pending events and the processed history with the cycle that consumed them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub pending: Vec<Event>,
    pub processed: Vec<(Event, u64)>,
}

impl EventLog {
    /// Every event, processed first then pending, ordered by id.
    pub fn all(&self) -> Vec<(&Event, Option<u64>)> {
        let mut out: Vec<(&Event, Option<u64>)> = self
            .processed
            .iter()
            .map(|(e, c)| (e, Some(*c)))
            .chain(self.pending.iter().map(|e| (e, None)))
            .collect();
        out.sort_by_key(|(e, _)| e.id);
        out
    }

    /// JSON Lines, one event per line in id order. Processed events carry the
    /// index of the cycle that consumed them.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            #[serde(flatten)]
            event: &'a Event,
            cycle: Option<u64>,
        }
        let mut out = String::new();
        for (event, cycle) in self.all() {
            out.push_str(&serde_json::to_string(&Line { event, cycle }).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InactivityTimer {
    pub deadline: u64,
    pub timeout_ms: u64,
}

impl InactivityTimer {
    pub fn new(now: u64, timeout_ms: u64) -> Self {
        Self {
            deadline: now + timeout_ms,
            timeout_ms,
        }
    }

    pub fn reset(&mut self, now: u64) {
        self.deadline = now + self.timeout_ms;
    }
}

/// Event log plus clock and inactivity timer for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct EventControl {
    log: EventLog,
    timer: InactivityTimer,
    now: u64,
    next_id: u64,
}

impl EventControl {
    pub fn new(start_ms: u64, timeout_ms: u64) -> Self {
        Self {
            log: EventLog::default(),
            timer: InactivityTimer::new(start_ms, timeout_ms),
            now: start_ms,
            next_id: 1,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn timer(&self) -> &InactivityTimer {
        &self.timer
    }

    pub fn pending(&self) -> &[Event] {
        &self.log.pending
    }

    /// Move the clock forward. Going backwards is an error.
    pub fn advance_to(&mut self, now: u64) -> Result<(), EventError> {
        if now < self.now {
            return Err(EventError::ClockRegression { now, last: self.now });
        }
        self.now = now;
        Ok(())
    }

    /// Append a new event stamped with the current time. Dialogue events
    /// reset the inactivity timer.
    pub fn create_event(
        &mut self,
        name: &str,
        event_type: EventType,
        category: EventCategory,
        attributes: BTreeMap<String, String>,
    ) -> Result<Event, EventError> {
        if event_type.category() != category {
            return Err(EventError::TaxonomyViolation { event_type, category });
        }
        let event = Event {
            id: self.next_id,
            name: name.to_string(),
            event_type,
            category,
            timestamp: self.now,
            attributes,
        };
        self.next_id += 1;
        if event_type == EventType::Dialogue {
            self.timer.reset(self.now);
        }
        self.log.pending.push(event.clone());
        Ok(event)
    }

    /// Advance to `now` and emit a time-out event if the inactivity deadline
    /// has passed. The timer is re-armed from `now`, so one deadline yields
    /// at most one event.
    pub fn tick(&mut self, now: u64) -> Result<Option<Event>, EventError> {
        self.advance_to(now)?;
        if now < self.timer.deadline {
            return Ok(None);
        }
        self.timer.reset(now);
        let event = self.create_event(
            TIME_OUT_EVENT,
            EventType::Time,
            EventCategory::LearningBehavior,
            BTreeMap::new(),
        )?;
        Ok(Some(event))
    }

    /// Drain every pending event into a batch ordered by type priority and
    /// then id, recording them as processed by `cycle`.
    pub fn poll(&mut self, cycle: u64) -> Vec<Event> {
        let mut batch = std::mem::take(&mut self.log.pending);
        batch.sort_by_key(Event::sort_key);
        self.log.processed.extend(batch.iter().cloned().map(|e| (e, cycle)));
        batch
    }
}
