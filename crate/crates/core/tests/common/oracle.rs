//! Independent line-coverage oracle. The component text (in canonical
//! layout) is rewritten so every statement line first prints a marker with
//! its original line number; the markers in the log are the hit lines.
//! Nothing here consults the interpreter's own coverage recorder.

use std::collections::{BTreeMap, BTreeSet};

use shipcheck::harness::{compile_suite, parse_labeled, run_suite, SuiteResult};
use shipcheck::lang::{self, ExecLimits, SourceUnit};

const MARK: &str = "\u{1}probe:";

/// Canonical text of a component, so that every statement sits on its own
/// line and `else if` always reads `} else if (...) {`.
pub fn canonical(unit: &SourceUnit) -> String {
    let program = lang::parse(unit).expect("oracle inputs parse");
    lang::pretty::unit(&program.ast)
}

pub struct Probed {
    pub text: String,
    /// Lines of fields with initializers; they run before any function.
    pub field_lines: BTreeSet<u32>,
    /// Every line that received a marker, plus the field lines.
    pub executable: BTreeSet<u32>,
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Inserts a marker print before every statement of canonical text.
pub fn probe(canonical: &str) -> Probed {
    let mut out = Vec::new();
    let mut field_lines = BTreeSet::new();
    let mut marked = BTreeSet::new();
    // extra closing braces owed at each indent after unfolding `else if`
    let mut owed: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, line) in canonical.lines().enumerate() {
        let n = i + 1;
        let trimmed = line.trim();
        let indent = indent_of(line);
        if trimmed.is_empty() || indent < 8 {
            if indent == 4 && trimmed.starts_with("var ") && trimmed.contains(" = ") {
                field_lines.insert(n as u32);
            }
            out.push(line.to_string());
            continue;
        }
        let pad = " ".repeat(indent);
        let marker = format!("{pad}print(\"{MARK}{n}\")");
        if trimmed == "}" {
            out.push(line.to_string());
            for _ in 0..owed.remove(&indent).unwrap_or(0) {
                out.push(format!("{pad}}}"));
            }
        } else if trimmed == "} else {" {
            out.push(line.to_string());
        } else if let Some(rest) = trimmed.strip_prefix("} else ") {
            // `} else if (c) {` becomes `} else {`, the marker, `if (c) {`
            assert!(rest.starts_with("if "), "unexpected line {n}: {line}");
            out.push(format!("{pad}}} else {{"));
            out.push(marker);
            marked.insert(n as u32);
            out.push(format!("{pad}{rest}"));
            *owed.entry(indent).or_default() += 1;
        } else {
            out.push(marker);
            marked.insert(n as u32);
            out.push(line.to_string());
        }
    }
    assert!(owed.is_empty(), "unbalanced else-if chain");
    marked.extend(&field_lines);
    Probed {
        text: out.join("\n") + "\n",
        field_lines,
        executable: marked,
    }
}

fn marked_lines<'a>(logs: impl IntoIterator<Item = &'a String>) -> BTreeSet<u32> {
    logs.into_iter()
        .filter_map(|l| l.strip_prefix(MARK))
        .map(|n| n.parse().expect("marker carries a line number"))
        .collect()
}

pub fn generous_limits() -> ExecLimits {
    ExecLimits {
        wall_timeout_ms: 20_000,
        max_steps: 50_000_000,
        max_log_lines: 1_000_000,
    }
}

/// Hit lines of one call to `entry`, by the oracle and by the recorder.
pub fn single_run(name: &str, canonical_text: &str, entry: &str) -> (BTreeSet<u32>, BTreeSet<u32>) {
    let limits = generous_limits();
    let plain = lang::parse(&SourceUnit::cut(name, canonical_text)).expect("canonical text parses");
    let recorded = lang::run(&plain, entry, &limits).expect("entry exists");
    let probed = probe(canonical_text);
    let p = lang::parse(&SourceUnit::cut(name, probed.text.clone()))
        .unwrap_or_else(|e| panic!("probed text does not parse: {e}\n{}", probed.text));
    let traced = lang::run(&p, entry, &limits).expect("entry exists");
    assert!(!traced.log_truncated);
    let mut oracle = marked_lines(&traced.log_lines);
    oracle.extend(&probed.field_lines);
    (oracle, recorded.hit_lines)
}

/// Hit lines of a whole suite against a component, by the oracle and by
/// the recorder. `tests` is a player suite or, with `hidden`, a hidden one.
pub fn suite_run(cut: &SourceUnit, tests: &SourceUnit, hidden: bool) -> (BTreeSet<u32>, SuiteResult) {
    let text = canonical(cut);
    let limits = generous_limits();
    let run = |cut_text: &str| {
        let cut = parse_labeled(&SourceUnit::cut(cut.name.clone(), cut_text), false).expect("cut parses");
        let t = parse_labeled(tests, hidden).expect("tests parse");
        let suite = if hidden {
            compile_suite(
                &cut,
                None,
                &[shipcheck::harness::HiddenUnit { program: &t, only: None }],
            )
        } else {
            compile_suite(&cut, Some(&t), &[])
        }
        .expect("suite compiles");
        run_suite(&suite, &limits)
    };
    let recorded = run(&text);
    let probed = probe(&text);
    let traced = run(&probed.text);
    let mut oracle = marked_lines(traced.results.iter().flat_map(|r| r.log_lines.iter()));
    if !traced.results.is_empty() {
        oracle.extend(&probed.field_lines);
    }
    (oracle, recorded)
}

/// Coverage percent of a player suite against a component, computed from
/// the probe markers alone.
pub fn suite_percent(cut: &SourceUnit, tests: &SourceUnit) -> f64 {
    let (hit, _) = suite_run(cut, tests, false);
    let executable = probe(&canonical(cut)).executable;
    if executable.is_empty() {
        return 100.0;
    }
    100.0 * hit.len() as f64 / executable.len() as f64
}

pub struct CorpusEntry {
    pub label: String,
    pub cut: SourceUnit,
    /// Suites to run against the component; `true` marks a hidden suite.
    pub suites: Vec<(SourceUnit, bool)>,
}

/// Every pristine component, mutant and wrong fix of the shipped pack,
/// each paired with its hidden suite and both reference player suites.
pub fn corpus(pack: &shipcheck::content::ContentPack) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for room in &pack.rooms {
        let c = room.spec.component_name.clone();
        let mut suites: Vec<(SourceUnit, bool)> = room.hidden.iter().map(|h| (h.source.clone(), true)).collect();
        suites.push((SourceUnit::test(format!("{c}Test"), super::fixtures::strong(&c)), false));
        suites.push((SourceUnit::test(format!("{c}Test"), super::fixtures::weak(&c)), false));
        for (variant, text) in [
            ("pristine", room.cut.text.clone()),
            ("mutant", room.mutant.text.clone()),
            ("wrong fix", super::fixtures::wrong_fix(&c)),
        ] {
            out.push(CorpusEntry {
                label: format!("{c} {variant}"),
                cut: SourceUnit::cut(c.clone(), text),
                suites: suites.clone(),
            });
        }
    }
    out
}

/// Hand-written components exercising faults, early returns, recursion and
/// `else if` chains; each is run from `main`.
pub const SHAPES: &[&str] = &[
    "component S {
    var n: int = 3
    var xs: array<int> = [1, 2]

    fn main(): int {
        if (n > 5) {
            return 1
        } else if (n > 2) {
            n = n + 1
        } else if (n > 1) {
            n = 0
        } else {
            return 2
        }
        var i: int = 0
        while (i < 5) {
            i = i + 1
        }
        return xs[i]
    }
}
",
    "component S {
    fn fib(k: int): int {
        if (k < 2) {
            return k
        }
        return fib(k - 1) + fib(k - 2)
    }

    fn main(): int {
        var total: int = 0
        total = fib(6)
        if (total == 8) {
            print(\"eight\")
        }
        return total / (total - 8)
    }
}
",
    "component S {
    var s: string = \"ab\"

    fn main(): int {
        var out: string = \"\"
        var i: int = 0
        while (i < len(s)) {
            out = out + charAt(s, i)
            i = i + 1
        }
        if (out == \"ab\" && len(out) > 5) {
            return 1
        }
        return len(out)
    }
}
",
];
