//! Per-player room lifecycle: talk, test, activation, sabotage, debugging,
//! fix verification and the minigame that opens the next room.
//!
//! All operations for one player run under that player's lock; the
//! scheduler's [`Engine::tick`] takes the same lock, so sabotage never
//! interleaves with a request.

pub mod minigame;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Timestamp};
use crate::content::{ContentPack, HiddenRef, RoomContent};
use crate::events::{EventKind, EventLog, Purpose};
use crate::harness::{
    compile_suite, meets_activation_gate, parse_labeled, run_suite, CompiledSuite, HiddenUnit,
    Origin, SuiteCompileError, SuiteResult, TestCase,
};
use crate::lang::{pretty, ExecLimits, Program, SourceUnit};
use crate::store::{Store, StoreError};
use minigame::{Puzzle, PuzzleSolution, SolutionError};

/// Code snapshots of one file closer together than this are coalesced.
pub const SNAPSHOT_DEBOUNCE_MS: i64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Door,
    Talk,
    Test,
    TestsActive,
    Destroyed,
    Mutated,
    Debugging,
    Resolved,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().expect("phase is a string"))
    }
}

impl Phase {
    /// Phases in which an activated suite snapshot exists.
    pub fn has_activated_suite(self) -> bool {
        matches!(
            self,
            Phase::TestsActive | Phase::Destroyed | Phase::Mutated | Phase::Debugging
        )
    }

    fn editor_open(self) -> bool {
        self.has_activated_suite() || self == Phase::Test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    FinishTalk,
    OpenEditor,
    ActivateTests,
    StartDebugging,
    SubmitFix,
    CompleteMinigame,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("action serializes");
        f.write_str(s.as_str().expect("action is a string"))
    }
}

/// Whether `action` may be attempted in `phase`.
pub fn action_allowed(phase: Phase, action: Action) -> bool {
    match action {
        Action::FinishTalk => phase == Phase::Talk,
        Action::OpenEditor => phase.editor_open(),
        Action::ActivateTests => phase == Phase::Test,
        Action::StartDebugging => matches!(phase, Phase::Mutated | Phase::Destroyed),
        Action::SubmitFix => phase == Phase::Debugging,
        Action::CompleteMinigame => phase == Phase::Resolved,
    }
}

/// Every phase change the engine can make within one room. Moving to the
/// next room is `RESOLVED → TALK` with the room number incremented.
pub const PHASE_EDGES: &[(Phase, Phase)] = &[
    (Phase::Door, Phase::Talk),
    (Phase::Talk, Phase::Test),
    (Phase::Test, Phase::TestsActive),
    (Phase::TestsActive, Phase::Mutated),
    (Phase::TestsActive, Phase::Destroyed),
    (Phase::Mutated, Phase::Debugging),
    (Phase::Destroyed, Phase::Debugging),
    (Phase::Debugging, Phase::Resolved),
    (Phase::Resolved, Phase::Talk),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CodeFile {
    Test,
    Cut,
}

/// A code modification waiting to be logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingSnapshot {
    pub file: CodeFile,
    pub room: u32,
    pub component_name: String,
    pub source: String,
    pub first_at: Timestamp,
    pub last_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerState {
    pub username: String,
    pub current_room: u32,
    pub component_name: String,
    pub phase: Phase,
    pub test_source: String,
    /// Working copy: pristine, then the mutant, then the player's edits.
    pub cut_source: String,
    /// Hidden tests appended to the player's suite in this room.
    pub hidden_tests: Vec<HiddenRef>,
    /// Test source as it was when the tests were activated.
    pub activated_suite: Option<String>,
    pub sabotage_deadline: Option<Timestamp>,
    pub puzzle: Option<Puzzle>,
    pub game_complete: bool,
    #[serde(default)]
    pub pending_snapshot: Option<PendingSnapshot>,
}

impl PlayerState {
    pub fn test_unit(&self) -> SourceUnit {
        SourceUnit::test(format!("{}Test", self.component_name), self.test_source.clone())
    }

    pub fn cut_unit(&self) -> SourceUnit {
        SourceUnit::cut(self.component_name.clone(), self.cut_source.clone())
    }
}

/// Starting test file for a component.
pub fn test_template(component: &str) -> String {
    format!("tests {component} {{\n}}\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SabotageOutcome {
    pub detected: bool,
    pub failing_tests: Vec<String>,
    pub appended_hidden_test: Option<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase", tag = "outcome")]
pub enum ExecuteOutcome {
    #[serde(rename = "EXECUTED")]
    Executed { result: SuiteResult },
    #[serde(rename = "COMPILE_ERROR")]
    CompileError { error: SuiteCompileError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Activation {
    pub phase: Phase,
    pub coverage_percent: f64,
    pub sabotage_at: Timestamp,
    pub result: SuiteResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FixOutcome {
    pub fixed: bool,
    pub phase: Phase,
    pub result: SuiteResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MinigameOutcome {
    pub room: u32,
    pub phase: Phase,
    pub game_complete: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("cannot {action} while the room is {phase}")]
    Transition { phase: Phase, action: Action },
    #[error("the {file:?} file cannot be edited while the room is {phase}")]
    EditForbidden { phase: Phase, file: CodeFile },
    #[error("tests cannot run while the room is {0}")]
    NothingToRun(Phase),
    #[error("{0}")]
    Compile(SuiteCompileError),
    #[error("activation needs every test passing and at least 50% line coverage (coverage is {coverage_percent}%)")]
    Gate {
        coverage_percent: f64,
        result: Box<SuiteResult>,
    },
    #[error("unknown or already used puzzle")]
    UnknownPuzzle,
    #[error("{0}")]
    Solution(#[from] SolutionError),
    #[error("the game is already complete")]
    GameComplete,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub limits: ExecLimits,
    /// Seed for puzzle generation; random when absent.
    pub seed: Option<u64>,
    pub snapshot_debounce_ms: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            limits: ExecLimits::default(),
            seed: None,
            snapshot_debounce_ms: SNAPSHOT_DEBOUNCE_MS,
        }
    }
}

/// Client-facing view of one room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RoomView {
    pub room: u32,
    pub room_name: String,
    pub component_name: String,
    pub status: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HiddenTestView {
    pub file: String,
    pub name: String,
    pub source: String,
}

/// The player state as clients see it: the internal RESOLVED phase is
/// shown as the next room's DOOR until the final room.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerView {
    pub username: String,
    pub room: u32,
    pub room_name: String,
    pub component_name: String,
    pub phase: Phase,
    pub test_source: String,
    pub cut_source: String,
    pub tests_active: bool,
    pub sabotage_at: Option<Timestamp>,
    pub hidden_tests: Vec<HiddenTestView>,
    pub dialogue: Vec<String>,
    pub puzzle: Option<Puzzle>,
    pub game_complete: bool,
    pub rooms: Vec<RoomView>,
}

type Handle = Arc<Mutex<PlayerState>>;

pub struct Engine {
    pack: Arc<ContentPack>,
    store: Arc<dyn Store>,
    log: EventLog,
    clock: Arc<dyn Clock>,
    players: Mutex<HashMap<String, Handle>>,
    rng: Mutex<ChaCha8Rng>,
    config: EngineConfig,
}

impl Engine {
    /// Restores players and the event log from `store`.
    pub fn new(
        pack: Arc<ContentPack>,
        store: Arc<dyn Store>,
        clock: Arc<dyn Clock>,
        config: EngineConfig,
    ) -> Result<Self, StoreError> {
        let log = EventLog::open(store.clone())?;
        let players = store
            .load_players()?
            .into_iter()
            .map(|p| (p.username.clone(), Arc::new(Mutex::new(p))))
            .collect();
        let seed = config.seed.unwrap_or_else(rand::random);
        Ok(Self {
            pack,
            store,
            log,
            clock,
            players: Mutex::new(players),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            config,
        })
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn pack(&self) -> &ContentPack {
        &self.pack
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// A copy of the player's state, creating the player on first access.
    pub fn state(&self, username: &str) -> Result<PlayerState, EngineError> {
        Ok(self.handle(username)?.lock().clone())
    }

    pub fn view(&self, username: &str) -> Result<PlayerView, EngineError> {
        let state = self.state(username)?;
        Ok(self.view_of(&state))
    }

    pub fn has_player(&self, username: &str) -> bool {
        self.players.lock().contains_key(username)
    }

    fn handle(&self, username: &str) -> Result<Handle, EngineError> {
        let mut players = self.players.lock();
        if let Some(h) = players.get(username) {
            return Ok(h.clone());
        }
        let room = self.pack.room(1).expect("a pack has at least one room");
        let state = PlayerState {
            username: username.to_string(),
            current_room: 1,
            component_name: room.spec.component_name.clone(),
            phase: Phase::Talk,
            test_source: test_template(&room.spec.component_name),
            cut_source: room.cut.text.clone(),
            hidden_tests: Vec::new(),
            activated_suite: None,
            sabotage_deadline: None,
            puzzle: None,
            game_complete: false,
            pending_snapshot: None,
        };
        self.log.record(
            username,
            self.clock.now(),
            EventKind::GameStarted {
                room: 1,
                component_name: state.component_name.clone(),
            },
        )?;
        self.store.save_player(&state)?;
        let h = Arc::new(Mutex::new(state));
        players.insert(username.to_string(), h.clone());
        Ok(h)
    }

    /// Runs `op` under the player's lock and persists the state if it
    /// changed, whether or not `op` succeeded.
    fn with_player<T>(
        &self,
        username: &str,
        op: impl FnOnce(&mut PlayerState) -> Result<T, EngineError>,
    ) -> Result<T, EngineError> {
        let handle = self.handle(username)?;
        let mut state = handle.lock();
        let before = state.clone();
        let result = op(&mut state);
        if *state != before {
            self.store.save_player(&state)?;
        }
        result
    }

    fn room_of(&self, state: &PlayerState) -> &RoomContent {
        self.pack
            .room(state.current_room)
            .expect("player rooms come from the pack")
    }

    /// Records an event after flushing any pending code snapshot.
    fn emit(&self, state: &mut PlayerState, kind: EventKind) -> Result<(), EngineError> {
        self.flush_snapshot(state)?;
        self.log.record(&state.username, self.clock.now(), kind)?;
        Ok(())
    }

    fn flush_snapshot(&self, state: &mut PlayerState) -> Result<(), EngineError> {
        if let Some(p) = state.pending_snapshot.take() {
            let kind = match p.file {
                CodeFile::Test => EventKind::TestCodeModified {
                    room: p.room,
                    component_name: p.component_name,
                    source: p.source,
                },
                CodeFile::Cut => EventKind::CutCodeModified {
                    room: p.room,
                    component_name: p.component_name,
                    source: p.source,
                },
            };
            self.log.record(&state.username, p.last_at, kind)?;
        }
        Ok(())
    }

    fn transition(state: &PlayerState, action: Action) -> Result<(), EngineError> {
        if state.game_complete {
            return Err(EngineError::GameComplete);
        }
        if action_allowed(state.phase, action) {
            Ok(())
        } else {
            Err(EngineError::Transition {
                phase: state.phase,
                action,
            })
        }
    }

    pub fn finish_talk(&self, username: &str) -> Result<Phase, EngineError> {
        self.with_player(username, |state| {
            Self::transition(state, Action::FinishTalk)?;
            state.phase = Phase::Test;
            let kind = EventKind::TalkFinished {
                room: state.current_room,
                component_name: state.component_name.clone(),
            };
            self.emit(state, kind)?;
            Ok(state.phase)
        })
    }

    /// Opening the editor changes nothing; it only checks the phase.
    pub fn open_editor(&self, username: &str) -> Result<Phase, EngineError> {
        self.with_player(username, |state| {
            Self::transition(state, Action::OpenEditor)?;
            Ok(state.phase)
        })
    }

    /// Stores an edit. Tests are editable in TEST and DEBUGGING, the
    /// component only in DEBUGGING.
    pub fn put_code(&self, username: &str, file: CodeFile, text: &str) -> Result<(), EngineError> {
        self.with_player(username, |state| {
            let allowed = match file {
                CodeFile::Test => matches!(state.phase, Phase::Test | Phase::Debugging),
                CodeFile::Cut => state.phase == Phase::Debugging,
            };
            if !allowed || state.game_complete {
                return Err(EngineError::EditForbidden {
                    phase: state.phase,
                    file,
                });
            }
            let slot = match file {
                CodeFile::Test => &mut state.test_source,
                CodeFile::Cut => &mut state.cut_source,
            };
            if slot == text {
                return Ok(());
            }
            *slot = text.to_string();
            let now = self.clock.now();
            match &mut state.pending_snapshot {
                Some(p) if p.file == file && now.millis() - p.first_at.millis() < self.config.snapshot_debounce_ms => {
                    p.source = text.to_string();
                    p.last_at = now;
                }
                _ => {
                    self.flush_snapshot(state)?;
                    state.pending_snapshot = Some(PendingSnapshot {
                        file,
                        room: state.current_room,
                        component_name: state.component_name.clone(),
                        source: text.to_string(),
                        first_at: now,
                        last_at: now,
                    });
                }
            }
            Ok(())
        })
    }

    fn compile(
        &self,
        state: &PlayerState,
        test_source: &str,
        hidden: HiddenSelection,
    ) -> Result<CompiledSuite, SuiteCompileError> {
        let room = self.room_of(state);
        let cut = parse_labeled(&state.cut_unit(), false)?;
        let tests = parse_labeled(
            &SourceUnit::test(format!("{}Test", state.component_name), test_source),
            false,
        )?;
        compile_with_hidden(room, &cut, &tests, hidden, &state.hidden_tests)
    }

    /// Runs the player's tests plus appended hidden tests against the
    /// current component view.
    pub fn execute(&self, username: &str) -> Result<ExecuteOutcome, EngineError> {
        self.with_player(username, |state| {
            if state.game_complete || !state.phase.editor_open() {
                return Err(EngineError::NothingToRun(state.phase));
            }
            let suite = match self.compile(state, &state.test_source, HiddenSelection::Appended) {
                Ok(s) => s,
                Err(error) => {
                    self.compile_failed(state, error.clone())?;
                    return Ok(ExecuteOutcome::CompileError { error });
                }
            };
            let result = run_suite(&suite, &self.config.limits);
            self.emit(
                state,
                EventKind::TestsExecuted {
                    room: state.current_room,
                    component_name: state.component_name.clone(),
                    purpose: Purpose::Run,
                    result: result.clone(),
                },
            )?;
            Ok(ExecuteOutcome::Executed { result })
        })
    }

    fn compile_failed(&self, state: &mut PlayerState, error: SuiteCompileError) -> Result<(), EngineError> {
        let kind = EventKind::CompilationFailed {
            room: state.current_room,
            component_name: state.component_name.clone(),
            error,
        };
        self.emit(state, kind)
    }

    /// Arms the player's tests if the activation gate passes and
    /// schedules the sabotage.
    pub fn activate(&self, username: &str) -> Result<Activation, EngineError> {
        self.with_player(username, |state| {
            Self::transition(state, Action::ActivateTests)?;
            let suite = match self.compile(state, &state.test_source, HiddenSelection::Appended) {
                Ok(s) => s,
                Err(error) => {
                    self.compile_failed(state, error.clone())?;
                    return Err(EngineError::Compile(error));
                }
            };
            let result = run_suite(&suite, &self.config.limits);
            if !meets_activation_gate(&result) {
                self.emit(
                    state,
                    EventKind::TestsExecuted {
                        room: state.current_room,
                        component_name: state.component_name.clone(),
                        purpose: Purpose::Activate,
                        result: result.clone(),
                    },
                )?;
                return Err(EngineError::Gate {
                    coverage_percent: result.coverage_percent,
                    result: Box::new(result),
                });
            }
            let wait = self.room_of(state).spec.wait_seconds;
            let deadline = self.clock.now().plus_secs(wait);
            state.phase = Phase::TestsActive;
            state.activated_suite = Some(state.test_source.clone());
            state.sabotage_deadline = Some(deadline);
            self.emit(
                state,
                EventKind::TestsActivated {
                    room: state.current_room,
                    component_name: state.component_name.clone(),
                    coverage_percent: result.coverage_percent,
                    sabotage_at: deadline,
                },
            )?;
            Ok(Activation {
                phase: state.phase,
                coverage_percent: result.coverage_percent,
                sabotage_at: deadline,
                result,
            })
        })
    }

    /// Swaps in the mutant and runs the activated suite against it.
    fn sabotage(&self, state: &mut PlayerState) -> Result<SabotageOutcome, EngineError> {
        let room = self.room_of(state);
        let activated = state
            .activated_suite
            .clone()
            .expect("TESTS_ACTIVE always has an activated suite");
        state.cut_source = room.mutant.text.clone();
        state.sabotage_deadline = None;
        self.emit(
            state,
            EventKind::SabotageTriggered {
                room: state.current_room,
                component_name: state.component_name.clone(),
            },
        )?;
        let result = match self.compile(state, &activated, HiddenSelection::Appended) {
            Ok(suite) => run_suite(&suite, &self.config.limits),
            // the mutant keeps the component's interface, so a suite that
            // compiled at activation compiles here too
            Err(e) => unreachable!("activated suite no longer compiles: {e}"),
        };
        let failing = result.failing();
        if !failing.is_empty() {
            state.phase = Phase::Mutated;
            self.emit(
                state,
                EventKind::MutationDetected {
                    room: state.current_room,
                    component_name: state.component_name.clone(),
                    failing_tests: failing.clone(),
                    result,
                },
            )?;
            return Ok(SabotageOutcome {
                detected: true,
                failing_tests: failing,
                appended_hidden_test: None,
            });
        }
        state.phase = Phase::Destroyed;
        let guide = room.guiding_test.clone();
        let source = hidden_source(room, &guide);
        state.hidden_tests.push(guide.clone());
        self.emit(
            state,
            EventKind::ComponentDestroyed {
                room: state.current_room,
                component_name: state.component_name.clone(),
                result,
            },
        )?;
        self.emit(
            state,
            EventKind::HiddenTestAdded {
                room: state.current_room,
                component_name: state.component_name.clone(),
                file: guide.file.clone(),
                test_name: guide.name.clone(),
                source,
            },
        )?;
        Ok(SabotageOutcome {
            detected: false,
            failing_tests: Vec::new(),
            appended_hidden_test: Some(TestCase {
                name: guide.name,
                origin: Origin::Hidden,
            }),
        })
    }

    /// Fires the sabotage now if the player's tests are active, regardless
    /// of the deadline.
    pub fn trigger_sabotage(&self, username: &str) -> Result<SabotageOutcome, EngineError> {
        self.with_player(username, |state| {
            if state.phase != Phase::TestsActive {
                return Err(EngineError::Transition {
                    phase: state.phase,
                    action: Action::ActivateTests,
                });
            }
            self.sabotage(state)
        })
    }

    pub fn start_debugging(&self, username: &str) -> Result<Phase, EngineError> {
        self.with_player(username, |state| {
            Self::transition(state, Action::StartDebugging)?;
            state.phase = Phase::Debugging;
            Ok(state.phase)
        })
    }

    /// Verifies the working copy (after applying `source`, if given)
    /// against the player's tests and every hidden test of the room.
    pub fn submit_fix(&self, username: &str, source: Option<&str>) -> Result<FixOutcome, EngineError> {
        if let Some(text) = source {
            let phase = self.state(username)?.phase;
            if phase != Phase::Debugging {
                return Err(EngineError::Transition {
                    phase,
                    action: Action::SubmitFix,
                });
            }
            self.put_code(username, CodeFile::Cut, text)?;
        }
        self.with_player(username, |state| {
            Self::transition(state, Action::SubmitFix)?;
            let suite = match self.compile(state, &state.test_source, HiddenSelection::All) {
                Ok(s) => s,
                Err(error) => {
                    self.compile_failed(state, error.clone())?;
                    return Err(EngineError::Compile(error));
                }
            };
            let result = run_suite(&suite, &self.config.limits);
            if !result.all_pass() {
                self.emit(
                    state,
                    EventKind::TestsExecuted {
                        room: state.current_room,
                        component_name: state.component_name.clone(),
                        purpose: Purpose::Fix,
                        result: result.clone(),
                    },
                )?;
                return Ok(FixOutcome {
                    fixed: false,
                    phase: state.phase,
                    result,
                });
            }
            state.phase = Phase::Resolved;
            state.activated_suite = None;
            state.puzzle = Some(Puzzle::generate(&mut *self.rng.lock()));
            self.emit(
                state,
                EventKind::ComponentFixed {
                    room: state.current_room,
                    component_name: state.component_name.clone(),
                    result: result.clone(),
                },
            )?;
            Ok(FixOutcome {
                fixed: true,
                phase: state.phase,
                result,
            })
        })
    }

    pub fn complete_minigame(&self, username: &str, solution: &PuzzleSolution) -> Result<MinigameOutcome, EngineError> {
        self.with_player(username, |state| {
            Self::transition(state, Action::CompleteMinigame)?;
            let Some(puzzle) = state.puzzle.as_ref().filter(|p| p.id == solution.puzzle_id) else {
                return Err(EngineError::UnknownPuzzle);
            };
            puzzle.check(&solution.rotations)?;
            state.puzzle = None;
            let last = state.current_room == self.pack.room_count();
            self.emit(
                state,
                EventKind::MinigameCompleted {
                    room: state.current_room,
                    puzzle_id: solution.puzzle_id.clone(),
                    game_complete: last,
                },
            )?;
            if last {
                state.game_complete = true;
            } else {
                let next = self
                    .pack
                    .room(state.current_room + 1)
                    .expect("room exists below the room count");
                state.current_room += 1;
                state.component_name = next.spec.component_name.clone();
                state.phase = Phase::Talk;
                state.test_source = test_template(&next.spec.component_name);
                state.cut_source = next.cut.text.clone();
                state.hidden_tests.clear();
                self.emit(
                    state,
                    EventKind::DoorUnlocked {
                        room: state.current_room,
                        room_name: next.spec.room_name.clone(),
                        component_name: next.spec.component_name.clone(),
                    },
                )?;
            }
            Ok(MinigameOutcome {
                room: state.current_room,
                phase: state.phase,
                game_complete: state.game_complete,
            })
        })
    }

    /// Scheduler step: flushes stale code snapshots and fires due
    /// sabotages. Players busy with a request are retried next tick.
    /// Returns the users whose sabotage fired.
    pub fn tick(&self) -> Vec<(String, SabotageOutcome)> {
        let handles: Vec<(String, Handle)> = self
            .players
            .lock()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut fired = Vec::new();
        for (user, handle) in handles {
            let Some(mut state) = handle.try_lock() else {
                continue;
            };
            let now = self.clock.now();
            let before = state.clone();
            let stale = state
                .pending_snapshot
                .as_ref()
                .is_some_and(|p| now.millis() - p.first_at.millis() >= self.config.snapshot_debounce_ms);
            let mut outcome = Ok(());
            if stale {
                outcome = self.flush_snapshot(&mut state);
            }
            let due = state.phase == Phase::TestsActive
                && state.sabotage_deadline.is_some_and(|d| d <= now);
            if due && outcome.is_ok() {
                match self.sabotage(&mut state) {
                    Ok(o) => fired.push((user.clone(), o)),
                    Err(e) => outcome = Err(e),
                }
            }
            if let Err(e) = outcome {
                tracing::error!(user, error = %e, "scheduler step failed");
            }
            if *state != before {
                if let Err(e) = self.store.save_player(&state) {
                    tracing::error!(user, error = %e, "saving player state failed");
                }
            }
        }
        fired
    }

    fn view_of(&self, state: &PlayerState) -> PlayerView {
        let room = self.room_of(state);
        let count = self.pack.room_count();
        let at_door = state.phase == Phase::Resolved && state.current_room < count;
        let shown = if at_door {
            self.pack.room(state.current_room + 1).expect("next room exists")
        } else {
            room
        };
        let rooms = self
            .pack
            .rooms
            .iter()
            .map(|r| {
                let n = r.spec.order;
                let status = if n < state.current_room
                    || (n == state.current_room && state.phase == Phase::Resolved)
                {
                    Phase::Resolved
                } else if n == state.current_room {
                    state.phase
                } else {
                    Phase::Door
                };
                RoomView {
                    room: n,
                    room_name: r.spec.room_name.clone(),
                    component_name: r.spec.component_name.clone(),
                    status,
                }
            })
            .collect();
        let hidden_tests = state
            .hidden_tests
            .iter()
            .map(|h| HiddenTestView {
                file: h.file.clone(),
                name: h.name.clone(),
                source: hidden_source(room, h),
            })
            .collect();
        PlayerView {
            username: state.username.clone(),
            room: shown.spec.order,
            room_name: shown.spec.room_name.clone(),
            component_name: shown.spec.component_name.clone(),
            phase: if at_door { Phase::Door } else { state.phase },
            test_source: state.test_source.clone(),
            cut_source: state.cut_source.clone(),
            tests_active: state.activated_suite.is_some(),
            sabotage_at: state.sabotage_deadline,
            hidden_tests,
            dialogue: shown.dialogue.clone(),
            puzzle: state.puzzle.clone(),
            game_complete: state.game_complete,
            rooms,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum HiddenSelection {
    /// Only the hidden tests appended to this player's suite.
    Appended,
    All,
}

fn compile_with_hidden(
    room: &RoomContent,
    cut: &Program,
    tests: &Program,
    hidden: HiddenSelection,
    appended: &[HiddenRef],
) -> Result<CompiledSuite, SuiteCompileError> {
    match hidden {
        HiddenSelection::All => compile_suite(cut, Some(tests), &room.all_hidden_units()),
        HiddenSelection::Appended => {
            let mut by_file: Vec<(&Program, Vec<String>)> = Vec::new();
            for h in appended {
                let Some(file) = room.hidden_file(&h.file) else {
                    continue;
                };
                match by_file.iter_mut().find(|(p, _)| std::ptr::eq(*p, &file.program)) {
                    Some((_, names)) => names.push(h.name.clone()),
                    None => by_file.push((&file.program, vec![h.name.clone()])),
                }
            }
            let units: Vec<HiddenUnit<'_>> = by_file
                .iter()
                .map(|(program, names)| HiddenUnit {
                    program,
                    only: Some(names.as_slice()),
                })
                .collect();
            compile_suite(cut, Some(tests), &units)
        }
    }
}

/// Source text of one hidden test function.
fn hidden_source(room: &RoomContent, h: &HiddenRef) -> String {
    room.hidden_file(&h.file)
        .and_then(|f| f.program.function(&h.name))
        .map(pretty::function_text)
        .unwrap_or_default()
}
