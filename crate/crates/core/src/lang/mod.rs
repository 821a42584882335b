//! The exercise language: lexer, parser, checker, pretty printer and a
//! tree-walking interpreter with statement-line coverage.
//!
//! A component file looks like
//!
//! ```text
//! component CryoPod {
//!     var days: int = 0
//!
//!     fn dayPassed(): bool {
//!         days = days + 1
//!         return days >= 3
//!     }
//! }
//! ```
//!
//! and a test file is a `tests CryoPod { ... }` block whose `test*`
//! functions call into the component.

pub mod ast;
pub mod check;
pub mod interp;
mod lexer;
mod parser;
pub mod pretty;
pub mod value;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use check::{Image, UnitId};
pub use interp::{
    run, run_with_cancel, CancelFlag, EntryError, ExecLimits, ExecOutcome, ExecStatus, Fault,
    FaultKind, TimeoutCause,
};
pub use value::Value;

/// File extension used for exercise-language sources.
pub const SOURCE_EXTENSION: &str = "ship";

/// Whether a unit is a component under test or a test file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnitKind {
    Cut,
    Test,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Cut => f.write_str("CUT"),
            UnitKind::Test => f.write_str("TEST"),
        }
    }
}

/// One source file in the exercise language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub name: String,
    pub text: String,
    pub kind: UnitKind,
}

impl SourceUnit {
    pub fn new(name: impl Into<String>, text: impl Into<String>, kind: UnitKind) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
            kind,
        }
    }

    pub fn cut(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(name, text, UnitKind::Cut)
    }

    pub fn test(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(name, text, UnitKind::Test)
    }

    /// Number of physical lines. LF, CRLF and a missing final newline all
    /// count the way an editor gutter does.
    pub fn lines(&self) -> u32 {
        let text = self.text.strip_suffix('\n').unwrap_or(&self.text);
        (text.split('\n').count() as u32).max(1)
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// 1-based line and column of a token.
///
/// Positions are metadata: two nodes that differ only in position compare
/// equal, so re-parsing a pretty-printed tree yields an equal tree.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl Pos {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct CompileError {
    pub message: String,
    pub line: u32,
    pub column: u32,
}

impl CompileError {
    pub fn new(message: impl Into<String>, pos: Pos) -> Self {
        Self {
            message: message.into(),
            line: pos.line.max(1),
            column: pos.column.max(1),
        }
    }
}

/// A parsed unit plus its instrumentation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub ast: ast::Unit,
    pub executable_lines: BTreeSet<u32>,
    pub source_lines: u32,
}

impl Program {
    pub fn name(&self) -> &str {
        &self.ast.name
    }

    pub fn kind(&self) -> UnitKind {
        self.ast.kind
    }

    pub fn function(&self, name: &str) -> Option<&ast::FnDecl> {
        self.ast.functions.iter().find(|f| f.name == name)
    }
}

/// Parses a unit. Components are fully resolved and type checked; test
/// files are checked once linked against their component (see
/// [`check::link`]).
pub fn parse(unit: &SourceUnit) -> Result<Program, CompileError> {
    if !is_identifier(&unit.name) {
        return Err(CompileError::new(
            format!("invalid unit name '{}'", unit.name),
            Pos::new(1, 1),
        ));
    }
    if unit.text.trim().is_empty() {
        return Err(CompileError::new("empty source", Pos::new(1, 1)));
    }
    let tokens = lexer::tokenize(&unit.text)?;
    let ast = parser::parse_unit(&tokens, unit.kind)?;
    if unit.kind == UnitKind::Cut && ast.name != unit.name {
        return Err(CompileError::new(
            format!(
                "component is named '{}' but the file is '{}'",
                ast.name, unit.name
            ),
            ast.pos,
        ));
    }
    let program = Program {
        executable_lines: executable_lines_of(&ast),
        source_lines: unit.lines(),
        ast,
    };
    if unit.kind == UnitKind::Cut {
        check::link(&program, &[]).map_err(|e| e.error)?;
    }
    Ok(program)
}

/// Lines whose statements the coverage recorder can hit.
pub fn executable_lines(program: &Program) -> &BTreeSet<u32> {
    &program.executable_lines
}

fn executable_lines_of(unit: &ast::Unit) -> BTreeSet<u32> {
    let mut lines = BTreeSet::new();
    for field in &unit.fields {
        if field.init.is_some() {
            lines.insert(field.pos.line);
        }
    }
    for f in &unit.functions {
        collect_block_lines(&f.body, &mut lines);
    }
    lines
}

fn collect_block_lines(block: &ast::Block, lines: &mut BTreeSet<u32>) {
    for stmt in &block.stmts {
        collect_stmt_lines(stmt, lines);
    }
}

fn collect_stmt_lines(stmt: &ast::Stmt, lines: &mut BTreeSet<u32>) {
    use ast::StmtKind;
    if let Some(line) = stmt.coverage_line() {
        lines.insert(line);
    }
    match &stmt.kind {
        StmtKind::If { then, els, .. } => {
            collect_block_lines(then, lines);
            match els {
                Some(ast::Else::Block(b)) => collect_block_lines(b, lines),
                Some(ast::Else::If(s)) => collect_stmt_lines(s, lines),
                None => {}
            }
        }
        StmtKind::While { body, .. } => collect_block_lines(body, lines),
        _ => {}
    }
}
