//! Random action sequences against the engine with invariant checks after
//! every step. Illegal transitions, edits outside the allowed phases and
//! wrong sabotage verdicts are collected as violations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shipcheck::clock::{ManualClock, Timestamp};
use shipcheck::content::{ContentPack, RoomContent};
use shipcheck::engine::minigame::PuzzleSolution;
use shipcheck::engine::{
    action_allowed, test_template, Action, CodeFile, Engine, EngineConfig, EngineError, Phase, PlayerState,
    PHASE_EDGES,
};
use shipcheck::harness::{compile_suite, parse_labeled, run_suite, HiddenUnit, SuiteResult};
use shipcheck::lang::{ExecLimits, SourceUnit};
use shipcheck::store::MemoryStore;

use super::fixtures;

pub const USER: &str = "fuzz";

#[derive(Debug, Default, Clone)]
pub struct Stats {
    pub steps: usize,
    pub phase_changes: usize,
    pub rejected: usize,
    pub detected: usize,
    pub destroyed: usize,
    pub fixes: usize,
    pub rooms_cleared: usize,
    pub violations: Vec<String>,
}

impl Stats {
    pub fn absorb(&mut self, other: Stats) {
        self.steps += other.steps;
        self.phase_changes += other.phase_changes;
        self.rejected += other.rejected;
        self.detected += other.detected;
        self.destroyed += other.destroyed;
        self.fixes += other.fixes;
        self.rooms_cleared += other.rooms_cleared;
        self.violations.extend(other.violations);
    }
}

#[derive(Debug, Clone)]
enum Step {
    FinishTalk,
    OpenEditor,
    PutTest(usize),
    PutCut(usize),
    Execute,
    Activate,
    StartDebugging,
    SubmitFix(Option<usize>),
    Minigame(usize),
    Wait(i64),
}

const TEST_CHOICES: usize = 6;
const CUT_CHOICES: usize = 4;

fn test_text(room: &RoomContent, choice: usize) -> String {
    let c = &room.spec.component_name;
    match choice {
        0 => fixtures::strong(c),
        1 => fixtures::weak(c),
        2 => test_template(c),
        3 => format!("tests {c} {{ fn testBroken( }}"),
        4 => format!("tests {c} {{\n    fn testFails() {{\n        assertTrue(false)\n    }}\n}}\n"),
        _ => format!("tests {c} {{\n    fn testHiddenCheat() {{\n    }}\n}}\n"),
    }
}

fn cut_text(room: &RoomContent, choice: usize) -> String {
    match choice {
        0 => room.cut.text.clone(),
        1 => room.mutant.text.clone(),
        2 => fixtures::wrong_fix(&room.spec.component_name),
        _ => "component Broken {".to_string(),
    }
}

fn legal_steps(phase: Phase) -> Vec<Step> {
    let mut v = vec![Step::Wait(0)];
    if action_allowed(phase, Action::FinishTalk) {
        v.push(Step::FinishTalk);
    }
    if action_allowed(phase, Action::OpenEditor) {
        v.push(Step::OpenEditor);
        v.push(Step::Execute);
    }
    if matches!(phase, Phase::Test | Phase::Debugging) {
        v.push(Step::PutTest(0));
    }
    if phase == Phase::Debugging {
        v.push(Step::PutCut(0));
        v.push(Step::SubmitFix(None));
    }
    if action_allowed(phase, Action::ActivateTests) {
        v.push(Step::Activate);
    }
    if action_allowed(phase, Action::StartDebugging) {
        v.push(Step::StartDebugging);
    }
    if action_allowed(phase, Action::CompleteMinigame) {
        v.push(Step::Minigame(0));
    }
    v
}

fn any_step(rng: &mut ChaCha8Rng) -> Step {
    match rng.random_range(0..10) {
        0 => Step::FinishTalk,
        1 => Step::OpenEditor,
        2 => Step::PutTest(0),
        3 => Step::PutCut(0),
        4 => Step::Execute,
        5 => Step::Activate,
        6 => Step::StartDebugging,
        7 => Step::SubmitFix(None),
        8 => Step::Minigame(0),
        _ => Step::Wait(0),
    }
}

/// Fills in the random parameters of a step.
fn parametrize(step: Step, rng: &mut ChaCha8Rng) -> Step {
    match step {
        Step::PutTest(_) => Step::PutTest(rng.random_range(0..TEST_CHOICES)),
        Step::PutCut(_) => Step::PutCut(rng.random_range(0..CUT_CHOICES)),
        Step::SubmitFix(_) => {
            // lean towards the pristine source so rooms get cleared
            let choice = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..CUT_CHOICES) };
            Step::SubmitFix(rng.random_bool(0.7).then_some(choice))
        }
        Step::Minigame(_) => Step::Minigame(rng.random_range(0..4)),
        Step::Wait(_) => Step::Wait(rng.random_range(0..4000)),
        s => s,
    }
}

fn limits() -> ExecLimits {
    ExecLimits {
        wall_timeout_ms: 5_000,
        ..ExecLimits::default()
    }
}

/// Runs `tests` as a player suite plus the selected hidden tests against
/// `cut_text`, independently of the engine.
fn oracle_run(room: &RoomContent, cut_text: &str, tests: Option<&str>, hidden: &[String]) -> Option<SuiteResult> {
    let c = &room.spec.component_name;
    let cut = parse_labeled(&SourceUnit::cut(c.clone(), cut_text), false).ok()?;
    let player = match tests {
        Some(t) => Some(parse_labeled(&SourceUnit::test(format!("{c}Test"), t), false).ok()?),
        None => None,
    };
    let units: Vec<HiddenUnit<'_>> = room
        .hidden
        .iter()
        .map(|h| HiddenUnit {
            program: &h.program,
            only: Some(hidden),
        })
        .collect();
    let suite = compile_suite(&cut, player.as_ref(), &units).ok()?;
    Some(run_suite(&suite, &limits()))
}

fn comparable(s: &PlayerState) -> PlayerState {
    let mut s = s.clone();
    s.pending_snapshot = None;
    s
}

/// One random sequence of `len` steps from a fresh player.
pub fn sequence(pack: &Arc<ContentPack>, seed: u64, len: usize) -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clock = ManualClock::new(Timestamp(1_700_000_000_000));
    let engine = Engine::new(
        pack.clone(),
        Arc::new(MemoryStore::default()),
        Arc::new(clock.clone()),
        EngineConfig {
            limits: limits(),
            seed: Some(seed),
            ..EngineConfig::default()
        },
    )
    .expect("engine starts");
    let mut stats = Stats::default();
    let mut stale_puzzle: Option<PuzzleSolution> = None;
    for i in 0..len {
        let before = engine.state(USER).expect("state");
        if before.game_complete {
            break;
        }
        let step = if rng.random_bool(0.8) {
            let legal = legal_steps(before.phase);
            legal[rng.random_range(0..legal.len())].clone()
        } else {
            any_step(&mut rng)
        };
        let step = parametrize(step, &mut rng);
        let room = pack.room(before.current_room).expect("room");
        let mut fired = false;
        let outcome: Result<(), EngineError> = match &step {
            Step::FinishTalk => engine.finish_talk(USER).map(drop),
            Step::OpenEditor => engine.open_editor(USER).map(drop),
            Step::PutTest(c) => engine.put_code(USER, CodeFile::Test, &test_text(room, *c)),
            Step::PutCut(c) => engine.put_code(USER, CodeFile::Cut, &cut_text(room, *c)),
            Step::Execute => engine.execute(USER).map(drop),
            Step::Activate => engine.activate(USER).map(drop),
            Step::StartDebugging => engine.start_debugging(USER).map(drop),
            Step::SubmitFix(c) => engine
                .submit_fix(USER, c.map(|c| cut_text(room, c)).as_deref())
                .map(drop),
            Step::Minigame(kind) => {
                let solution = match (&before.puzzle, kind) {
                    (Some(p), 0 | 1) => PuzzleSolution {
                        puzzle_id: p.id.clone(),
                        rotations: p.solve().expect("solvable"),
                    },
                    (Some(p), 2) => PuzzleSolution {
                        puzzle_id: p.id.clone(),
                        rotations: p.current_rotations(),
                    },
                    _ => stale_puzzle.clone().unwrap_or(PuzzleSolution {
                        puzzle_id: "0000000000000000".into(),
                        rotations: vec![0; 16],
                    }),
                };
                let r = engine.complete_minigame(USER, &solution).map(drop);
                if r.is_ok() {
                    stale_puzzle = Some(solution);
                }
                r
            }
            Step::Wait(ms) => {
                clock.advance_millis(*ms);
                fired = !engine.tick().is_empty();
                Ok(())
            }
        };
        let after = engine.state(USER).expect("state");
        stats.steps += 1;
        let mut fail = |msg: String| {
            stats
                .violations
                .push(format!("seed {seed} step {i} {step:?} in {}: {msg}", before.phase))
        };

        if outcome.is_err() {
            stats.rejected += 1;
            let gate_or_compile = matches!(
                outcome,
                Err(EngineError::Gate { .. }) | Err(EngineError::Compile(_))
            );
            // a refused fix may still have stored the submitted source
            let fix_edit = matches!(step, Step::SubmitFix(Some(_)));
            if comparable(&before) != comparable(&after) && !gate_or_compile && !fix_edit {
                fail(format!("rejected step changed state: {:?}", outcome.err()));
            }
        }

        let advanced = after.current_room != before.current_room;
        if after.phase != before.phase || advanced {
            stats.phase_changes += 1;
            let edge = (before.phase, after.phase);
            let ok = if advanced {
                edge == (Phase::Resolved, Phase::Talk) && after.current_room == before.current_room + 1
            } else {
                PHASE_EDGES.contains(&edge)
            };
            if !ok {
                fail(format!("illegal transition {} -> {}", before.phase, after.phase));
            }
        }

        if after.cut_source != before.cut_source {
            let edit = before.phase == Phase::Debugging
                && matches!(step, Step::PutCut(_) | Step::SubmitFix(Some(_)));
            let sabotage = before.phase == Phase::TestsActive
                && matches!(after.phase, Phase::Mutated | Phase::Destroyed)
                && after.cut_source == room.mutant.text;
            let next_room = advanced
                && after.cut_source == pack.room(after.current_room).expect("room").cut.text;
            if !(edit || sabotage || next_room) {
                fail("component changed outside DEBUGGING".into());
            }
        }
        if after.test_source != before.test_source && !advanced {
            let allowed = matches!(before.phase, Phase::Test | Phase::Debugging) && matches!(step, Step::PutTest(_));
            if !allowed {
                fail("tests changed outside TEST or DEBUGGING".into());
            }
        }

        if before.phase == Phase::TestsActive && matches!(after.phase, Phase::Mutated | Phase::Destroyed) {
            if !fired {
                fail("sabotage outside the scheduler".into());
            }
            let activated = before.activated_suite.as_deref().expect("activated suite");
            let appended: Vec<String> = before.hidden_tests.iter().map(|h| h.name.clone()).collect();
            let verdict = oracle_run(room, &room.mutant.text, Some(activated), &appended)
                .expect("activated suite compiles");
            if verdict.all_pass() != (after.phase == Phase::Destroyed) {
                fail(format!("verdict mismatch: all_pass={} phase={}", verdict.all_pass(), after.phase));
            }
            if after.phase == Phase::Destroyed {
                stats.destroyed += 1;
                match after.hidden_tests.last() {
                    Some(h) if after.hidden_tests.len() == before.hidden_tests.len() + 1 => {
                        let only = [h.name.clone()];
                        let on_mutant = oracle_run(room, &room.mutant.text, None, &only).expect("runs");
                        let on_pristine = oracle_run(room, &room.cut.text, None, &only).expect("runs");
                        if on_mutant.all_pass() || !on_pristine.all_pass() {
                            fail(format!("appended hidden test {} does not separate mutant from pristine", h.name));
                        }
                    }
                    _ => fail("destroyed without exactly one appended hidden test".into()),
                }
            } else {
                stats.detected += 1;
                if !after.hidden_tests.is_empty() {
                    fail("hidden test appended after a detected sabotage".into());
                }
            }
        }

        if before.phase == Phase::Debugging && after.phase == Phase::Resolved {
            stats.fixes += 1;
            let all: Vec<String> = room.hidden_tests().into_iter().map(|h| h.name).collect();
            let check = oracle_run(room, &after.cut_source, Some(&after.test_source), &all);
            if !check.is_some_and(|r| r.all_pass()) {
                fail("resolved with a component that fails the full suite".into());
            }
        }
        if advanced {
            stats.rooms_cleared += 1;
        }
    }
    stats
}

/// `count` sequences with seeds `first..first + count`.
pub fn campaign(pack: &Arc<ContentPack>, first: u64, count: u64, len: usize) -> Stats {
    let mut total = Stats::default();
    for seed in first..first + count {
        total.absorb(sequence(pack, seed, len));
    }
    total
}
