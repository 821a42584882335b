//! Append-only telemetry: the fourteen event types, the log that assigns
//! ids, and the JSON export.
//!
//! Every exported object carries `id`, `username`, `timestamp` and `type`
//! followed by the payload fields of its type:
//!
//! | type | payload |
//! |------|---------|
//! | `GameStarted` | `room`, `componentName` |
//! | `DoorUnlocked` | `room`, `roomName`, `componentName` |
//! | `TalkFinished` | `room`, `componentName` |
//! | `TestCodeModified` | `room`, `componentName`, `source` |
//! | `CutCodeModified` | `room`, `componentName`, `source` |
//! | `CompilationFailed` | `room`, `componentName`, `error` |
//! | `TestsExecuted` | `room`, `componentName`, `purpose`, `result` |
//! | `TestsActivated` | `room`, `componentName`, `coveragePercent`, `sabotageAt` |
//! | `SabotageTriggered` | `room`, `componentName` |
//! | `MutationDetected` | `room`, `componentName`, `failingTests`, `result` |
//! | `ComponentDestroyed` | `room`, `componentName`, `result` |
//! | `HiddenTestAdded` | `room`, `componentName`, `file`, `testName`, `source` |
//! | `ComponentFixed` | `room`, `componentName`, `result` |
//! | `MinigameCompleted` | `room`, `puzzleId`, `gameComplete` |

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::clock::Timestamp;
use crate::harness::{SuiteCompileError, SuiteResult};
use crate::store::{Store, StoreError};

/// Why a suite was executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Purpose {
    Run,
    Activate,
    Fix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all_fields = "camelCase")]
pub enum EventKind {
    GameStarted {
        room: u32,
        component_name: String,
    },
    DoorUnlocked {
        room: u32,
        room_name: String,
        component_name: String,
    },
    TalkFinished {
        room: u32,
        component_name: String,
    },
    TestCodeModified {
        room: u32,
        component_name: String,
        source: String,
    },
    CutCodeModified {
        room: u32,
        component_name: String,
        source: String,
    },
    CompilationFailed {
        room: u32,
        component_name: String,
        error: SuiteCompileError,
    },
    TestsExecuted {
        room: u32,
        component_name: String,
        purpose: Purpose,
        result: SuiteResult,
    },
    TestsActivated {
        room: u32,
        component_name: String,
        coverage_percent: f64,
        sabotage_at: Timestamp,
    },
    SabotageTriggered {
        room: u32,
        component_name: String,
    },
    MutationDetected {
        room: u32,
        component_name: String,
        failing_tests: Vec<String>,
        result: SuiteResult,
    },
    ComponentDestroyed {
        room: u32,
        component_name: String,
        result: SuiteResult,
    },
    HiddenTestAdded {
        room: u32,
        component_name: String,
        file: String,
        test_name: String,
        source: String,
    },
    ComponentFixed {
        room: u32,
        component_name: String,
        result: SuiteResult,
    },
    MinigameCompleted {
        room: u32,
        puzzle_id: String,
        game_complete: bool,
    },
}

/// The closed set of event type names, in declaration order.
pub const EVENT_TYPES: [&str; 14] = [
    "GameStarted",
    "DoorUnlocked",
    "TalkFinished",
    "TestCodeModified",
    "CutCodeModified",
    "CompilationFailed",
    "TestsExecuted",
    "TestsActivated",
    "SabotageTriggered",
    "MutationDetected",
    "ComponentDestroyed",
    "HiddenTestAdded",
    "ComponentFixed",
    "MinigameCompleted",
];

impl EventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::GameStarted { .. } => "GameStarted",
            EventKind::DoorUnlocked { .. } => "DoorUnlocked",
            EventKind::TalkFinished { .. } => "TalkFinished",
            EventKind::TestCodeModified { .. } => "TestCodeModified",
            EventKind::CutCodeModified { .. } => "CutCodeModified",
            EventKind::CompilationFailed { .. } => "CompilationFailed",
            EventKind::TestsExecuted { .. } => "TestsExecuted",
            EventKind::TestsActivated { .. } => "TestsActivated",
            EventKind::SabotageTriggered { .. } => "SabotageTriggered",
            EventKind::MutationDetected { .. } => "MutationDetected",
            EventKind::ComponentDestroyed { .. } => "ComponentDestroyed",
            EventKind::HiddenTestAdded { .. } => "HiddenTestAdded",
            EventKind::ComponentFixed { .. } => "ComponentFixed",
            EventKind::MinigameCompleted { .. } => "MinigameCompleted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub id: u64,
    pub username: String,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct ExportFilter {
    pub username: Option<String>,
    /// Inclusive lower bound.
    pub from: Option<Timestamp>,
    /// Inclusive upper bound.
    pub to: Option<Timestamp>,
}

impl ExportFilter {
    pub fn matches(&self, e: &GameEvent) -> bool {
        self.username.as_ref().is_none_or(|u| *u == e.username)
            && self.from.is_none_or(|t| e.timestamp >= t)
            && self.to.is_none_or(|t| e.timestamp <= t)
    }
}

struct LogState {
    events: Vec<GameEvent>,
    last_seen: HashMap<String, Timestamp>,
}

/// Assigns ids, persists, and fans events out to subscribers.
pub struct EventLog {
    state: Mutex<LogState>,
    store: Arc<dyn Store>,
    notify: broadcast::Sender<GameEvent>,
}

impl EventLog {
    /// Opens the log, resuming ids after the persisted events.
    pub fn open(store: Arc<dyn Store>) -> Result<Self, StoreError> {
        let events = store.load_events()?;
        let mut last_seen = HashMap::new();
        for e in &events {
            last_seen.insert(e.username.clone(), e.timestamp);
        }
        let (notify, _) = broadcast::channel(1024);
        Ok(Self {
            state: Mutex::new(LogState { events, last_seen }),
            store,
            notify,
        })
    }

    /// Appends an event and returns it once it is durable. The timestamp is
    /// raised to the player's previous one if the clock went backwards.
    pub fn record(&self, username: &str, at: Timestamp, kind: EventKind) -> Result<GameEvent, StoreError> {
        let mut state = self.state.lock();
        let id = state.events.last().map_or(1, |e| e.id + 1);
        let floor = state.last_seen.get(username).copied().unwrap_or_default();
        let event = GameEvent {
            id,
            username: username.to_string(),
            timestamp: at.max(floor),
            kind,
        };
        self.store.append_event(&event)?;
        state.last_seen.insert(username.to_string(), event.timestamp);
        state.events.push(event.clone());
        // nobody listening is fine
        let _ = self.notify.send(event.clone());
        Ok(event)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<GameEvent> {
        self.notify.subscribe()
    }

    /// Id of the newest event of `username`, or 0 if there is none.
    pub fn last_id(&self, username: &str) -> u64 {
        let state = self.state.lock();
        state.events.iter().rev().find(|e| e.username == username).map_or(0, |e| e.id)
    }

    pub fn len(&self) -> usize {
        self.state.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Matching events sorted by id.
    pub fn export(&self, filter: &ExportFilter) -> Vec<GameEvent> {
        self.state
            .lock()
            .events
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    pub fn export_json(&self, filter: &ExportFilter) -> String {
        export_json(&self.export(filter))
    }
}

pub fn export_json(events: &[GameEvent]) -> String {
    serde_json::to_string_pretty(events).expect("events serialize")
}

pub fn parse_export(text: &str) -> Result<Vec<GameEvent>, serde_json::Error> {
    serde_json::from_str(text)
}
