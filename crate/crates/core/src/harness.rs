//! Compiles a component together with player and hidden tests, runs every
//! test function in isolation and aggregates results and line coverage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::lang::check::{self, FnId};
use crate::lang::interp::run_function;
use crate::lang::{
    parse, CancelFlag, CompileError, ExecLimits, ExecStatus, FaultKind, Image, Pos, Program,
    SourceUnit, TimeoutCause, UnitKind,
};

/// Prefix every hidden test name carries; player tests may not use it.
pub const HIDDEN_PREFIX: &str = "testHidden";
/// Minimum line coverage, in percent, required to activate tests.
pub const ACTIVATION_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Origin {
    Player,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

/// Where a failing test stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Location {
    pub unit: String,
    pub kind: UnitKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestResult {
    pub name: String,
    pub origin: Origin,
    pub status: TestStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<Location>,
    pub elapsed_ms: u64,
    pub log_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteResult {
    pub cut_name: String,
    pub results: Vec<TestResult>,
    /// Covered lines of the component.
    pub hit_lines: BTreeSet<u32>,
    pub executable_lines: BTreeSet<u32>,
    pub coverage_percent: f64,
    /// Output of every test, in test order.
    pub log_lines: Vec<String>,
}

impl SuiteResult {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.status == TestStatus::Pass)
    }

    /// Names of tests that did not pass.
    pub fn failing(&self) -> Vec<String> {
        self.results
            .iter()
            .filter(|r| r.status != TestStatus::Pass)
            .map(|r| r.name.clone())
            .collect()
    }

    pub fn status_of(&self, name: &str) -> Option<TestStatus> {
        self.results.iter().find(|r| r.name == name).map(|r| r.status)
    }
}

/// `100 * |hit ∩ executable| / |executable|`; a component with nothing to
/// execute counts as fully covered.
pub fn coverage_percent(hit: &BTreeSet<u32>, executable: &BTreeSet<u32>) -> f64 {
    if executable.is_empty() {
        return 100.0;
    }
    let covered = hit.intersection(executable).count();
    100.0 * covered as f64 / executable.len() as f64
}

/// True iff coverage reaches the threshold (ties pass), there is at least
/// one player test, and every player test passes.
pub fn meets_activation_gate(s: &SuiteResult) -> bool {
    let mut player = s.results.iter().filter(|r| r.origin == Origin::Player).peekable();
    player.peek().is_some()
        && player.all(|r| r.status == TestStatus::Pass)
        && s.coverage_percent >= ACTIVATION_THRESHOLD
}

/// A compile error labeled with the unit it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "camelCase")]
#[error("{kind} {unit}: {error}")]
pub struct SuiteCompileError {
    pub unit: String,
    pub kind: UnitKind,
    pub hidden: bool,
    pub error: CompileError,
}

/// A hidden test file and the tests selected from it (`None` = all).
#[derive(Debug, Clone, Copy)]
pub struct HiddenUnit<'a> {
    pub program: &'a Program,
    pub only: Option<&'a [String]>,
}

#[derive(Debug)]
pub struct CompiledSuite {
    cut_name: String,
    image: Image,
    cases: Vec<(TestCase, FnId)>,
    executable_lines: BTreeSet<u32>,
}

impl CompiledSuite {
    pub fn cases(&self) -> impl Iterator<Item = &TestCase> {
        self.cases.iter().map(|(c, _)| c)
    }

    pub fn executable_lines(&self) -> &BTreeSet<u32> {
        &self.executable_lines
    }
}

/// Parses and links a component with one player test file.
pub fn compile_pair(cut: &SourceUnit, tests: &SourceUnit) -> Result<CompiledSuite, SuiteCompileError> {
    let cut = parse_labeled(cut, false)?;
    let tests = parse_labeled(tests, false)?;
    compile_suite(&cut, Some(&tests), &[])
}

pub fn parse_labeled(unit: &SourceUnit, hidden: bool) -> Result<Program, SuiteCompileError> {
    parse(unit).map_err(|error| SuiteCompileError {
        unit: unit.name.clone(),
        kind: unit.kind,
        hidden,
        error,
    })
}

/// Links already parsed units. Player tests come first in the case list,
/// followed by the selected hidden tests in file order.
pub fn compile_suite(
    cut: &Program,
    player: Option<&Program>,
    hidden: &[HiddenUnit<'_>],
) -> Result<CompiledSuite, SuiteCompileError> {
    let label = |program: &Program, is_hidden: bool, error: CompileError| SuiteCompileError {
        unit: program.name().to_string(),
        kind: program.kind(),
        hidden: is_hidden,
        error,
    };
    if let Some(p) = player {
        if let Some(f) = p
            .ast
            .functions
            .iter()
            .find(|f| f.name.starts_with(HIDDEN_PREFIX))
        {
            return Err(label(
                p,
                false,
                CompileError::new(
                    format!("test names starting with '{HIDDEN_PREFIX}' are reserved"),
                    f.pos,
                ),
            ));
        }
    }
    let mut units: Vec<&Program> = Vec::new();
    units.extend(player);
    units.extend(hidden.iter().map(|h| h.program));
    let image = check::link(cut, &units).map_err(|e| {
        if e.unit == 0 {
            label(cut, false, e.error)
        } else {
            let is_hidden = player.is_none() || e.unit > 1;
            label(units[e.unit - 1], is_hidden, e.error)
        }
    })?;

    let mut cases = Vec::new();
    let mut next_unit = 1;
    if player.is_some() {
        for id in image.test_functions(next_unit) {
            let name = image.function_name(id).to_string();
            cases.push((TestCase { name, origin: Origin::Player }, id));
        }
        next_unit += 1;
    }
    for h in hidden {
        let unit = next_unit;
        next_unit += 1;
        let available = image.test_functions(unit);
        let selected: Vec<FnId> = match h.only {
            None => available,
            Some(names) => {
                let mut out = Vec::new();
                for name in names {
                    match available.iter().find(|id| image.function_name(**id) == name) {
                        Some(id) => out.push(*id),
                        None => {
                            return Err(label(
                                h.program,
                                true,
                                CompileError::new(format!("no test named '{name}'"), Pos::new(1, 1)),
                            ))
                        }
                    }
                }
                out
            }
        };
        for id in selected {
            let name = image.function_name(id).to_string();
            cases.push((TestCase { name, origin: Origin::Hidden }, id));
        }
    }
    for (i, (case, _)) in cases.iter().enumerate() {
        if cases[..i].iter().any(|(c, _)| c.name == case.name) {
            return Err(SuiteCompileError {
                unit: cut.name().to_string(),
                kind: UnitKind::Test,
                hidden: case.origin == Origin::Hidden,
                error: CompileError::new(format!("duplicate test name '{}'", case.name), Pos::new(1, 1)),
            });
        }
    }
    Ok(CompiledSuite {
        cut_name: cut.name().to_string(),
        executable_lines: cut.executable_lines.clone(),
        image,
        cases,
    })
}

pub fn run_suite(suite: &CompiledSuite, limits: &ExecLimits) -> SuiteResult {
    run_suite_with_cancel(suite, limits, &CancelFlag::new())
}

/// Runs every test with fresh component state and its own watchdog.
pub fn run_suite_with_cancel(suite: &CompiledSuite, limits: &ExecLimits, cancel: &CancelFlag) -> SuiteResult {
    let mut results = Vec::with_capacity(suite.cases.len());
    let mut hit_lines = BTreeSet::new();
    let mut log_lines = Vec::new();
    for (case, id) in &suite.cases {
        let outcome = match run_function(&suite.image, *id, limits, cancel) {
            Ok(o) => o,
            // test functions are checked to take no parameters, and invalid
            // limits make every test an error
            Err(e) => {
                results.push(TestResult {
                    name: case.name.clone(),
                    origin: case.origin,
                    status: TestStatus::Error,
                    message: Some(e.to_string()),
                    location: None,
                    elapsed_ms: 0,
                    log_lines: Vec::new(),
                });
                continue;
            }
        };
        hit_lines.extend(outcome.hit_lines.iter().copied());
        log_lines.extend(outcome.log_lines.iter().cloned());
        let location = outcome.fault.as_ref().map(|f| {
            let info = &suite.image.units[f.unit];
            Location {
                unit: info.name.clone(),
                kind: info.kind,
                line: f.line,
            }
        });
        let (status, message) = match outcome.status {
            ExecStatus::Ok => (TestStatus::Pass, None),
            ExecStatus::RuntimeError => {
                let fault = outcome.fault.expect("runtime error carries a fault");
                let status = match fault.kind {
                    FaultKind::Assertion => TestStatus::Fail,
                    FaultKind::Runtime => TestStatus::Error,
                };
                (status, Some(fault.message))
            }
            ExecStatus::Timeout => {
                let message = match outcome.timeout {
                    Some(TimeoutCause::StepBudget) => {
                        format!("exceeded the step budget of {} steps", limits.max_steps)
                    }
                    Some(TimeoutCause::Cancelled) => "cancelled".to_string(),
                    _ => format!("timed out after {} ms", limits.wall_timeout_ms),
                };
                (TestStatus::Timeout, Some(message))
            }
        };
        results.push(TestResult {
            name: case.name.clone(),
            origin: case.origin,
            status,
            message,
            location,
            elapsed_ms: outcome.elapsed_ms,
            log_lines: outcome.log_lines,
        });
    }
    let hit_lines: BTreeSet<u32> = hit_lines
        .intersection(&suite.executable_lines)
        .copied()
        .collect();
    SuiteResult {
        cut_name: suite.cut_name.clone(),
        coverage_percent: coverage_percent(&hit_lines, &suite.executable_lines),
        results,
        hit_lines,
        executable_lines: suite.executable_lines.clone(),
        log_lines,
    }
}
