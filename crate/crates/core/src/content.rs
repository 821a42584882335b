//! Level content: progression table, pristine components, mutants, hidden
//! tests and robot dialogue, loaded from a directory or from the pack
//! compiled into the binary.
//!
//! ```text
//! game/game-progression.csv   order,roomName,componentName,waitSeconds
//! cut/<Component>.ship        pristine component
//! mutants/<Component>.ship    sabotaged replacement
//! test/<Component>Test*.ship  hidden tests (names start with testHidden)
//! dialogue/<Component>.txt    one robot line per text line
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::{compile_suite, run_suite, HiddenUnit, SuiteResult, HIDDEN_PREFIX};
use crate::lang::{ast, is_identifier, parse, ExecLimits, Program, SourceUnit, SOURCE_EXTENSION};

pub const PROGRESSION_PATH: &str = "game/game-progression.csv";
const CSV_HEADER: [&str; 4] = ["order", "roomName", "componentName", "waitSeconds"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoomSpec {
    pub order: u32,
    pub room_name: String,
    pub component_name: String,
    pub wait_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionConfig {
    pub rooms: Vec<RoomSpec>,
}

impl ProgressionConfig {
    /// Parses the progression table. Rows may appear in any order; the
    /// result is sorted by `order`.
    pub fn parse_csv(text: &str) -> Result<Self, Vec<String>> {
        let mut errors = Vec::new();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        match reader.headers() {
            Ok(h) if h.iter().eq(CSV_HEADER.iter().copied()) => {}
            Ok(h) => errors.push(format!(
                "progression header must be '{}', found '{}'",
                CSV_HEADER.join(","),
                h.iter().collect::<Vec<_>>().join(",")
            )),
            Err(e) => errors.push(format!("progression table: {e}")),
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut rooms = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    errors.push(format!("progression row {row}: {e}"));
                    continue;
                }
            };
            if record.len() != 4 {
                errors.push(format!("progression row {row}: expected 4 columns"));
                continue;
            }
            let order = record[0].parse::<u32>();
            let wait = record[3].parse::<u64>();
            let (room_name, component_name) = (&record[1], &record[2]);
            if order.is_err() {
                errors.push(format!("progression row {row}: invalid order '{}'", &record[0]));
            }
            if wait.is_err() {
                errors.push(format!(
                    "progression row {row}: waitSeconds must be a non-negative integer, found '{}'",
                    &record[3]
                ));
            }
            for (what, name) in [("roomName", room_name), ("componentName", component_name)] {
                if !is_identifier(name) {
                    errors.push(format!("progression row {row}: invalid {what} '{name}'"));
                }
            }
            if let (Ok(order), Ok(wait_seconds)) = (order, wait) {
                rooms.push(RoomSpec {
                    order,
                    room_name: room_name.to_string(),
                    component_name: component_name.to_string(),
                    wait_seconds,
                });
            }
        }
        rooms.sort_by_key(|r| r.order);
        if rooms.is_empty() && errors.is_empty() {
            errors.push("progression table has no rooms".to_string());
        }
        for (i, room) in rooms.iter().enumerate() {
            let expected = i as u32 + 1;
            if room.order != expected {
                errors.push(format!(
                    "progression orders must be contiguous from 1: expected {expected}, found {}",
                    room.order
                ));
                break;
            }
        }
        let mut seen = BTreeSet::new();
        for room in &rooms {
            if !seen.insert(room.component_name.as_str()) {
                errors.push(format!("component '{}' appears more than once", room.component_name));
            }
        }
        if errors.is_empty() {
            Ok(Self { rooms })
        } else {
            Err(errors)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("write to memory");
        for r in &self.rooms {
            w.write_record([
                r.order.to_string(),
                r.room_name.clone(),
                r.component_name.clone(),
                r.wait_seconds.to_string(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
    }
}

/// A hidden test file.
#[derive(Debug, Clone)]
pub struct HiddenFile {
    pub source: SourceUnit,
    pub program: Program,
}

/// One hidden test function, addressed by file and name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HiddenRef {
    pub file: String,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct RoomContent {
    pub spec: RoomSpec,
    pub cut: SourceUnit,
    pub cut_program: Program,
    pub mutant: SourceUnit,
    pub mutant_program: Program,
    pub hidden: Vec<HiddenFile>,
    pub dialogue: Vec<String>,
    /// First hidden test, in file order, that fails on the mutant.
    pub guiding_test: HiddenRef,
}

impl RoomContent {
    pub fn hidden_file(&self, name: &str) -> Option<&HiddenFile> {
        self.hidden.iter().find(|h| h.source.name == name)
    }

    /// Every hidden test of the room, in file order.
    pub fn hidden_tests(&self) -> Vec<HiddenRef> {
        self.hidden
            .iter()
            .flat_map(|h| {
                hidden_names(&h.program).into_iter().map(|name| HiddenRef {
                    file: h.source.name.clone(),
                    name,
                })
            })
            .collect()
    }

    /// All hidden files with every test selected.
    pub fn all_hidden_units(&self) -> Vec<HiddenUnit<'_>> {
        self.hidden
            .iter()
            .map(|h| HiddenUnit {
                program: &h.program,
                only: None,
            })
            .collect()
    }
}

fn hidden_names(program: &Program) -> Vec<String> {
    program
        .ast
        .functions
        .iter()
        .filter(|f| f.name.starts_with("test"))
        .map(|f| f.name.clone())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ContentPack {
    pub progression: ProgressionConfig,
    pub rooms: Vec<RoomContent>,
}

/// Every problem found while loading a pack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "content pack rejected ({} problems):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Relative path → file contents.
pub type PackFiles = BTreeMap<String, String>;

macro_rules! embedded {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../content/", $path)))),*]
    };
}

const DEFAULT_FILES: &[(&str, &str)] = embedded![
    "game/game-progression.csv",
    "cut/CryoPod.ship",
    "cut/OxygenMixer.ship",
    "cut/EngineCoolant.ship",
    "cut/CargoManifest.ship",
    "cut/NavTree.ship",
    "cut/PowerGrid.ship",
    "cut/CommsEncoder.ship",
    "mutants/CryoPod.ship",
    "mutants/OxygenMixer.ship",
    "mutants/EngineCoolant.ship",
    "mutants/CargoManifest.ship",
    "mutants/NavTree.ship",
    "mutants/PowerGrid.ship",
    "mutants/CommsEncoder.ship",
    "test/CryoPodTest.ship",
    "test/OxygenMixerTest.ship",
    "test/EngineCoolantTest.ship",
    "test/CargoManifestTest.ship",
    "test/NavTreeTest.ship",
    "test/PowerGridTest.ship",
    "test/CommsEncoderTest.ship",
    "dialogue/CryoPod.txt",
    "dialogue/OxygenMixer.txt",
    "dialogue/EngineCoolant.txt",
    "dialogue/CargoManifest.txt",
    "dialogue/NavTree.txt",
    "dialogue/PowerGrid.txt",
    "dialogue/CommsEncoder.txt",
];

/// Files of the pack shipped with the binary.
pub fn default_files() -> PackFiles {
    DEFAULT_FILES
        .iter()
        .map(|(p, t)| (p.to_string(), t.to_string()))
        .collect()
}

/// The seven-room pack shipped with the binary.
pub fn default_pack() -> ContentPack {
    ContentPack::from_files(&default_files()).expect("embedded content pack is valid")
}

/// Reads every file of the pack layout below `root`.
pub fn read_dir(root: &Path) -> std::io::Result<PackFiles> {
    let mut files = PackFiles::new();
    for sub in ["game", "cut", "mutants", "test", "dialogue"] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            continue;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            files.insert(format!("{sub}/{name}"), std::fs::read_to_string(&path)?);
        }
    }
    Ok(files)
}

impl ContentPack {
    pub fn load(root: &Path) -> Result<Self, ValidationReport> {
        let files = read_dir(root).map_err(|e| ValidationReport {
            violations: vec![format!("cannot read {}: {e}", root.display())],
        })?;
        Self::from_files(&files)
    }

    /// Loads and validates a pack. Hidden suites are executed against both
    /// the pristine component and the mutant.
    pub fn from_files(files: &PackFiles) -> Result<Self, ValidationReport> {
        let mut violations = Vec::new();
        let Some(csv_text) = files.get(PROGRESSION_PATH) else {
            return Err(ValidationReport {
                violations: vec![format!("missing {PROGRESSION_PATH}")],
            });
        };
        let progression = match ProgressionConfig::parse_csv(csv_text) {
            Ok(p) => p,
            Err(errors) => return Err(ValidationReport { violations: errors }),
        };
        let mut rooms = Vec::new();
        let mut seen_hidden = BTreeSet::new();
        for spec in &progression.rooms {
            if let Some(room) = load_room(files, spec, &mut seen_hidden, &mut violations) {
                rooms.push(room);
            }
        }
        if violations.is_empty() {
            Ok(Self { progression, rooms })
        } else {
            Err(ValidationReport { violations })
        }
    }

    pub fn room(&self, number: u32) -> Option<&RoomContent> {
        number
            .checked_sub(1)
            .and_then(|i| self.rooms.get(i as usize))
    }

    pub fn room_count(&self) -> u32 {
        self.rooms.len() as u32
    }

    /// Sets every room's sabotage delay, e.g. to zero for scripted runs.
    pub fn with_wait_seconds(mut self, seconds: u64) -> Self {
        for room in &mut self.rooms {
            room.spec.wait_seconds = seconds;
        }
        for row in &mut self.progression.rooms {
            row.wait_seconds = seconds;
        }
        self
    }
}

fn load_room(
    files: &PackFiles,
    spec: &RoomSpec,
    seen_hidden: &mut BTreeSet<String>,
    violations: &mut Vec<String>,
) -> Option<RoomContent> {
    let c = &spec.component_name;
    let before = violations.len();
    let mut source = |dir: &str| -> Option<SourceUnit> {
        let path = format!("{dir}/{c}.{SOURCE_EXTENSION}");
        match files.get(&path) {
            Some(text) => Some(SourceUnit::cut(c.clone(), text.clone())),
            None => {
                violations.push(format!("{c}: missing {path}"));
                None
            }
        }
    };
    let cut = source("cut");
    let mutant = source("mutants");
    let parsed = |unit: &Option<SourceUnit>, what: &str, violations: &mut Vec<String>| {
        let unit = unit.as_ref()?;
        parse(unit)
            .map_err(|e| violations.push(format!("{c}: {what} does not compile: {e}")))
            .ok()
    };
    let cut_program = parsed(&cut, "component", violations);
    let mutant_program = parsed(&mutant, "mutant", violations);

    let prefix = format!("test/{c}Test");
    let mut hidden = Vec::new();
    for (path, text) in files.range(prefix.clone()..) {
        if !path.starts_with(&prefix) {
            break;
        }
        let Some(stem) = path
            .strip_prefix("test/")
            .and_then(|p| p.strip_suffix(&format!(".{SOURCE_EXTENSION}")))
        else {
            continue;
        };
        let unit = SourceUnit::test(stem, text.clone());
        match parse(&unit) {
            Ok(program) => {
                for f in &program.ast.functions {
                    if f.name.starts_with("test") && !f.name.starts_with(HIDDEN_PREFIX) {
                        violations.push(format!(
                            "{c}: hidden test {stem}.{} must start with '{HIDDEN_PREFIX}'",
                            f.name
                        ));
                    }
                    if f.name.starts_with(HIDDEN_PREFIX) && !seen_hidden.insert(f.name.clone()) {
                        violations.push(format!("{c}: hidden test name '{}' is used twice", f.name));
                    }
                }
                hidden.push(HiddenFile {
                    source: unit,
                    program,
                });
            }
            Err(e) => violations.push(format!("{c}: hidden tests {stem} do not compile: {e}")),
        }
    }
    if hidden.is_empty() && !files.keys().any(|p| p.starts_with(&prefix)) {
        violations.push(format!("{c}: no hidden tests (expected {prefix}*.{SOURCE_EXTENSION})"));
    }

    let dialogue: Vec<String> = match files.get(&format!("dialogue/{c}.txt")) {
        Some(text) => text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => {
            violations.push(format!("{c}: missing dialogue/{c}.txt"));
            Vec::new()
        }
    };
    if dialogue.is_empty() && files.contains_key(&format!("dialogue/{c}.txt")) {
        violations.push(format!("{c}: dialogue file is empty"));
    }

    let (Some(cut), Some(cut_program), Some(mutant), Some(mutant_program)) =
        (cut, cut_program, mutant, mutant_program)
    else {
        return None;
    };
    if cut_program.ast == mutant_program.ast {
        violations.push(format!("{c}: mutant does not differ from the component"));
    }
    if let Some(problem) = interface_difference(&cut_program.ast, &mutant_program.ast) {
        violations.push(format!("{c}: mutant changes the interface: {problem}"));
    }
    if hidden.is_empty() || violations.len() > before {
        return None;
    }

    let units: Vec<HiddenUnit<'_>> = hidden
        .iter()
        .map(|h| HiddenUnit {
            program: &h.program,
            only: None,
        })
        .collect();
    let limits = ExecLimits::default();
    let run = |target: &Program, what: &str, violations: &mut Vec<String>| -> Option<SuiteResult> {
        match compile_suite(target, None, &units) {
            Ok(suite) => Some(run_suite(&suite, &limits)),
            Err(e) => {
                violations.push(format!("{c}: hidden tests do not link against the {what}: {e}"));
                None
            }
        }
    };
    let pristine = run(&cut_program, "component", violations)?;
    let on_mutant = run(&mutant_program, "mutant", violations)?;
    for r in pristine.results.iter().filter(|r| r.status != crate::harness::TestStatus::Pass) {
        violations.push(format!(
            "{c}: pristine component fails hidden test {}: {}",
            r.name,
            r.message.as_deref().unwrap_or("no message")
        ));
    }
    let killer = on_mutant
        .results
        .iter()
        .position(|r| r.status != crate::harness::TestStatus::Pass);
    let Some(killer) = killer else {
        violations.push(format!("{c}: mutant not killed by any hidden test"));
        return None;
    };
    if violations.len() > before {
        return None;
    }
    let all: Vec<HiddenRef> = hidden
        .iter()
        .flat_map(|h| {
            hidden_names(&h.program).into_iter().map(|name| HiddenRef {
                file: h.source.name.clone(),
                name,
            })
        })
        .collect();
    Some(RoomContent {
        spec: spec.clone(),
        cut,
        cut_program,
        mutant,
        mutant_program,
        guiding_test: all[killer].clone(),
        hidden,
        dialogue,
    })
}

/// Describes the first way `b` exposes a different interface than `a`:
/// field names and types, function names and signatures.
fn interface_difference(a: &ast::Unit, b: &ast::Unit) -> Option<String> {
    let fields = |u: &ast::Unit| -> Vec<(String, String)> {
        u.fields.iter().map(|f| (f.name.clone(), f.ty.to_string())).collect()
    };
    if fields(a) != fields(b) {
        return Some("fields differ".to_string());
    }
    let sigs = |u: &ast::Unit| -> BTreeMap<String, String> {
        u.functions
            .iter()
            .map(|f| {
                let params: Vec<String> = f.params.iter().map(|p| p.ty.to_string()).collect();
                (f.name.clone(), format!("({}): {}", params.join(", "), f.ret))
            })
            .collect()
    };
    let (sa, sb) = (sigs(a), sigs(b));
    for (name, sig) in &sa {
        match sb.get(name) {
            None => return Some(format!("function '{name}' is missing")),
            Some(other) if other != sig => {
                return Some(format!("function '{name}' changes from {sig} to {other}"))
            }
            _ => {}
        }
    }
    sb.keys()
        .find(|name| !sa.contains_key(*name))
        .map(|name| format!("function '{name}' is new"))
}
