//! Tree-walking interpreter with statement-line coverage and a watchdog.
//!
//! Every run starts from fresh component state. The step budget and the
//! wall-clock deadline are both checked inside the interpreter loop, so a
//! run never outlives its limits by more than one polling interval.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::check::{Arith, Builtin, Cmp, Expr_, FnId, Image, Num, Place, Root, Site, Stmt_};
use super::value::{format_float, Value};
use super::{Program, UnitId, UnitKind};

/// Maximum call depth; the entry function is frame 1.
pub const MAX_CALL_DEPTH: usize = 256;
/// Largest array or string (in elements / chars) a program may build.
pub const MAX_COLLECTION_LEN: usize = 1_000_000;
/// How many steps pass between wall-clock and cancellation checks.
const POLL_INTERVAL: u64 = 64;
/// Interpreter threads get a large stack so deep expressions inside deep
/// recursion cannot overflow the host.
const INTERPRETER_STACK: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecLimits {
    pub wall_timeout_ms: u64,
    pub max_steps: u64,
    pub max_log_lines: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            wall_timeout_ms: 2000,
            max_steps: 5_000_000,
            max_log_lines: 1000,
        }
    }
}

impl ExecLimits {
    pub fn is_valid(&self) -> bool {
        self.wall_timeout_ms > 0 && self.max_steps > 0 && self.max_log_lines > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TimeoutCause {
    WallClock,
    StepBudget,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FaultKind {
    Runtime,
    Assertion,
}

/// Why a run stopped early with `RUNTIME_ERROR`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Fault {
    pub kind: FaultKind,
    pub message: String,
    pub unit: UnitId,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub return_value: Option<Value>,
    /// Executed lines of the component (unit 0).
    pub hit_lines: BTreeSet<u32>,
    pub log_lines: Vec<String>,
    pub log_truncated: bool,
    pub elapsed_ms: u64,
    pub steps: u64,
    pub fault: Option<Fault>,
    pub timeout: Option<TimeoutCause>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EntryError {
    #[error("unknown entry function '{0}'")]
    Unknown(String),
    #[error("entry function '{0}' must not take parameters")]
    HasParameters(String),
    #[error("only components can be run directly")]
    NotAComponent,
    #[error("execution limits must be strictly positive")]
    InvalidLimits,
}

/// Shared flag through which a host aborts a run from another thread.
#[derive(Debug, Clone, Default)]
pub struct CancelFlag(Arc<AtomicBool>);

impl CancelFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

/// Runs a zero-argument function of a component.
pub fn run(program: &Program, entry: &str, limits: &ExecLimits) -> Result<ExecOutcome, EntryError> {
    run_with_cancel(program, entry, limits, &CancelFlag::new())
}

pub fn run_with_cancel(
    program: &Program,
    entry: &str,
    limits: &ExecLimits,
    cancel: &CancelFlag,
) -> Result<ExecOutcome, EntryError> {
    if program.kind() != UnitKind::Cut {
        return Err(EntryError::NotAComponent);
    }
    // a parsed component always links on its own
    let image = super::check::link(program, &[]).map_err(|_| EntryError::NotAComponent)?;
    let id = image
        .function(0, entry)
        .ok_or_else(|| EntryError::Unknown(entry.to_string()))?;
    run_function(&image, id, limits, cancel)
}

/// Runs one zero-argument function of a linked image with fresh state.
pub fn run_function(
    image: &Image,
    entry: FnId,
    limits: &ExecLimits,
    cancel: &CancelFlag,
) -> Result<ExecOutcome, EntryError> {
    if !limits.is_valid() {
        return Err(EntryError::InvalidLimits);
    }
    if image.function_arity(entry) != 0 {
        return Err(EntryError::HasParameters(
            image.function_name(entry).to_string(),
        ));
    }
    let outcome = std::thread::scope(|scope| {
        std::thread::Builder::new()
            .name("interpreter".into())
            .stack_size(INTERPRETER_STACK)
            .spawn_scoped(scope, || execute(image, entry, limits, cancel))
            .expect("spawn interpreter thread")
            .join()
            .expect("interpreter thread panicked")
    });
    Ok(outcome)
}

fn execute(image: &Image, entry: FnId, limits: &ExecLimits, cancel: &CancelFlag) -> ExecOutcome {
    let start = Instant::now();
    let mut m = Machine {
        image,
        fields: Vec::with_capacity(image.fields.len()),
        hits: image
            .units
            .iter()
            .map(|u| vec![false; u.lines as usize + 2])
            .collect(),
        logs: Vec::new(),
        log_truncated: false,
        max_logs: limits.max_log_lines,
        steps: 0,
        max_steps: limits.max_steps,
        deadline: start + Duration::from_millis(limits.wall_timeout_ms),
        cancel,
        depth: 0,
        site: None,
    };
    let result = m.init_fields().and_then(|()| m.call(entry, Vec::new()));
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let (status, return_value, fault, timeout) = match result {
        Ok(v) => {
            let rv = if matches!(v, Value::Void) { None } else { Some(v) };
            (ExecStatus::Ok, rv, None, None)
        }
        Err(Halt::Fault(f)) => (ExecStatus::RuntimeError, None, Some(f), None),
        Err(Halt::Timeout(cause)) => (ExecStatus::Timeout, None, None, Some(cause)),
    };
    let hit_lines = m.hits[0]
        .iter()
        .enumerate()
        .filter(|(_, hit)| **hit)
        .map(|(line, _)| line as u32)
        .collect();
    ExecOutcome {
        status,
        return_value,
        hit_lines,
        log_lines: m.logs,
        log_truncated: m.log_truncated,
        elapsed_ms,
        steps: m.steps,
        fault,
        timeout,
    }
}

enum Halt {
    Fault(Fault),
    Timeout(TimeoutCause),
}

enum Flow {
    Next,
    Return(Value),
}

type R<T> = Result<T, Halt>;

struct Machine<'a> {
    image: &'a Image,
    fields: Vec<Value>,
    hits: Vec<Vec<bool>>,
    logs: Vec<String>,
    log_truncated: bool,
    max_logs: usize,
    steps: u64,
    max_steps: u64,
    deadline: Instant,
    cancel: &'a CancelFlag,
    depth: usize,
    site: Option<Site>,
}

impl Machine<'_> {
    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(Halt::Timeout(TimeoutCause::StepBudget));
        }
        if self.steps.is_multiple_of(POLL_INTERVAL) {
            if self.cancel.is_cancelled() {
                return Err(Halt::Timeout(TimeoutCause::Cancelled));
            }
            if Instant::now() >= self.deadline {
                return Err(Halt::Timeout(TimeoutCause::WallClock));
            }
        }
        Ok(())
    }

    fn enter(&mut self, at: Site) -> R<()> {
        self.site = Some(at);
        if at.counted {
            if let Some(slot) = self.hits[at.unit].get_mut(at.line as usize) {
                *slot = true;
            }
        }
        self.tick()
    }

    fn fault(&self, message: impl Into<String>) -> Halt {
        self.fault_of(FaultKind::Runtime, message)
    }

    fn fault_of(&self, kind: FaultKind, message: impl Into<String>) -> Halt {
        let (unit, line) = self.site.map(|s| (s.unit, s.line)).unwrap_or((0, 0));
        Halt::Fault(Fault {
            kind,
            message: message.into(),
            unit,
            line,
        })
    }

    fn init_fields(&mut self) -> R<()> {
        let image = self.image;
        for field in &image.fields {
            let v = match &field.init {
                Some(init) => {
                    self.enter(Site {
                        unit: 0,
                        line: field.line,
                        counted: true,
                    })?;
                    self.eval(init, &mut Vec::new())?
                }
                None => Value::default_for(&field.ty),
            };
            self.fields.push(v);
        }
        Ok(())
    }

    fn call(&mut self, id: FnId, args: Vec<Value>) -> R<Value> {
        let image = self.image;
        let f = &image.functions[id];
        if self.depth >= MAX_CALL_DEPTH {
            return Err(self.fault("stack overflow"));
        }
        self.depth += 1;
        let mut locals = args;
        locals.resize(f.locals.max(locals.len()), Value::Void);
        let saved = self.site;
        let flow = self.block(&f.body, &mut locals);
        self.depth -= 1;
        self.site = saved;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Ok(Value::Void),
        }
    }

    fn block(&mut self, stmts: &[Stmt_], locals: &mut Vec<Value>) -> R<Flow> {
        for stmt in stmts {
            if let Flow::Return(v) = self.stmt(stmt, locals)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, stmt: &Stmt_, locals: &mut Vec<Value>) -> R<Flow> {
        match stmt {
            Stmt_::Let { slot, init, at } => {
                self.enter(*at)?;
                let v = self.eval(init, locals)?;
                locals[*slot] = v;
            }
            Stmt_::Assign { place, value, at } => {
                self.enter(*at)?;
                let path = self.eval_path(place, locals)?;
                let v = self.eval(value, locals)?;
                self.store(place.root, &path, locals, |slot| {
                    *slot = v;
                    Ok(())
                })?;
            }
            Stmt_::If {
                cond,
                then,
                els,
                at,
            } => {
                self.enter(*at)?;
                let branch = if self.eval_bool(cond, locals)? {
                    then
                } else {
                    els
                };
                return self.block(branch, locals);
            }
            Stmt_::While { cond, body, at } => {
                self.enter(*at)?;
                loop {
                    if !self.eval_bool(cond, locals)? {
                        break;
                    }
                    if let Flow::Return(v) = self.block(body, locals)? {
                        return Ok(Flow::Return(v));
                    }
                    self.site = Some(*at);
                    self.tick()?;
                }
            }
            Stmt_::Return { value, at } => {
                self.enter(*at)?;
                let v = match value {
                    Some(e) => self.eval(e, locals)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v));
            }
            Stmt_::Expr { expr, at } => {
                self.enter(*at)?;
                self.eval(expr, locals)?;
            }
        }
        Ok(Flow::Next)
    }

    fn eval_bool(&mut self, e: &Expr_, locals: &mut Vec<Value>) -> R<bool> {
        match self.eval(e, locals)? {
            Value::Bool(b) => Ok(b),
            other => Err(self.fault(format!("expected a bool, found {other}"))),
        }
    }

    fn eval_int(&mut self, e: &Expr_, locals: &mut Vec<Value>) -> R<i64> {
        match self.eval(e, locals)? {
            Value::Int(v) => Ok(v),
            other => Err(self.fault(format!("expected an int, found {other}"))),
        }
    }

    fn eval_f64(&mut self, e: &Expr_, locals: &mut Vec<Value>) -> R<f64> {
        let v = self.eval(e, locals)?;
        v.as_f64()
            .ok_or_else(|| self.fault(format!("expected a number, found {v}")))
    }

    fn eval_path(&mut self, place: &Place, locals: &mut Vec<Value>) -> R<Vec<i64>> {
        place
            .path
            .iter()
            .map(|e| self.eval_int(e, locals))
            .collect()
    }

    /// Applies `op` to the element a place designates.
    fn store(
        &mut self,
        root: Root,
        path: &[i64],
        locals: &mut [Value],
        op: impl FnOnce(&mut Value) -> Result<(), String>,
    ) -> R<()> {
        let base = match root {
            Root::Local(slot) => &mut locals[slot],
            Root::Field(idx) => &mut self.fields[idx],
        };
        let result = walk(base, path).and_then(op);
        result.map_err(|msg| self.fault(msg))
    }

    fn eval(&mut self, e: &Expr_, locals: &mut Vec<Value>) -> R<Value> {
        Ok(match e {
            Expr_::Const(v) => v.clone(),
            Expr_::Local(slot) => locals[*slot].clone(),
            Expr_::Field(idx) => self.fields[*idx].clone(),
            Expr_::Index(base, index) => {
                let base = self.eval(base, locals)?;
                let i = self.eval_int(index, locals)?;
                match base {
                    Value::Array(items) => {
                        let at = checked_index(i, items.len()).map_err(|m| self.fault(m))?;
                        items[at].clone()
                    }
                    other => return Err(self.fault(format!("cannot index {other}"))),
                }
            }
            Expr_::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.eval(item, locals)?);
                }
                Value::Array(Arc::new(out))
            }
            Expr_::Call(id, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, locals)?);
                }
                self.tick()?;
                self.call(*id, vals)?
            }
            Expr_::Push(place, value) => {
                let path = self.eval_path(place, locals)?;
                let v = self.eval(value, locals)?;
                self.store(place.root, &path, locals, |target| match target {
                    Value::Array(items) => {
                        if items.len() >= MAX_COLLECTION_LEN {
                            return Err("array too large".to_string());
                        }
                        Arc::make_mut(items).push(v);
                        Ok(())
                    }
                    other => Err(format!("cannot push onto {other}")),
                })?;
                Value::Void
            }
            Expr_::Neg(Num::Int, inner) => Value::Int(self.eval_int(inner, locals)?.wrapping_neg()),
            Expr_::Neg(Num::Float, inner) => Value::Float(-self.eval_f64(inner, locals)?),
            Expr_::Not(inner) => Value::Bool(!self.eval_bool(inner, locals)?),
            Expr_::Arith(op, Num::Int, a, b) => {
                let x = self.eval_int(a, locals)?;
                let y = self.eval_int(b, locals)?;
                Value::Int(match op {
                    Arith::Add => x.wrapping_add(y),
                    Arith::Sub => x.wrapping_sub(y),
                    Arith::Mul => x.wrapping_mul(y),
                    Arith::Div | Arith::Rem if y == 0 => {
                        return Err(self.fault("division by zero"))
                    }
                    Arith::Div => x.wrapping_div(y),
                    Arith::Rem => x.wrapping_rem(y),
                })
            }
            Expr_::Arith(op, Num::Float, a, b) => {
                let x = self.eval_f64(a, locals)?;
                let y = self.eval_f64(b, locals)?;
                Value::Float(match op {
                    Arith::Add => x + y,
                    Arith::Sub => x - y,
                    Arith::Mul => x * y,
                    Arith::Div => x / y,
                    Arith::Rem => x % y,
                })
            }
            Expr_::Concat(a, b) => {
                let x = self.eval(a, locals)?;
                let y = self.eval(b, locals)?;
                let mut s = x.to_string();
                s.push_str(&y.to_string());
                if s.len() > MAX_COLLECTION_LEN {
                    return Err(self.fault("string too long"));
                }
                Value::Str(Arc::from(s))
            }
            Expr_::Compare(cmp, a, b) => {
                let x = self.eval(a, locals)?;
                let y = self.eval(b, locals)?;
                let ord = match (&x, &y) {
                    (Value::Int(p), Value::Int(q)) => p.partial_cmp(q),
                    (Value::Str(p), Value::Str(q)) => p.partial_cmp(q),
                    _ => match (x.as_f64(), y.as_f64()) {
                        (Some(p), Some(q)) => p.partial_cmp(&q),
                        _ => return Err(self.fault(format!("cannot compare {x} and {y}"))),
                    },
                };
                use std::cmp::Ordering::*;
                Value::Bool(match (cmp, ord) {
                    (_, None) => false, // NaN
                    (Cmp::Lt, Some(o)) => o == Less,
                    (Cmp::Le, Some(o)) => o != Greater,
                    (Cmp::Gt, Some(o)) => o == Greater,
                    (Cmp::Ge, Some(o)) => o != Less,
                })
            }
            Expr_::Equal(negate, a, b) => {
                let x = self.eval(a, locals)?;
                let y = self.eval(b, locals)?;
                Value::Bool((x == y) != *negate)
            }
            Expr_::And(a, b) => Value::Bool(self.eval_bool(a, locals)? && self.eval_bool(b, locals)?),
            Expr_::Or(a, b) => Value::Bool(self.eval_bool(a, locals)? || self.eval_bool(b, locals)?),
            Expr_::ToFloat(inner) => Value::Float(self.eval_f64(inner, locals)?),
            Expr_::Builtin(b, args) => self.builtin(*b, args, locals)?,
        })
    }

    fn builtin(&mut self, b: Builtin, args: &[Expr_], locals: &mut Vec<Value>) -> R<Value> {
        let mut vals = Vec::with_capacity(args.len());
        for a in args {
            vals.push(self.eval(a, locals)?);
        }
        let float = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
        let string = |v: &Value| match v {
            Value::Str(s) => s.clone(),
            _ => Arc::from(""),
        };
        Ok(match b {
            Builtin::Print => {
                if self.logs.len() < self.max_logs {
                    self.logs.push(vals[0].to_string());
                } else {
                    self.log_truncated = true;
                }
                Value::Void
            }
            Builtin::Len => match &vals[0] {
                Value::Array(items) => Value::Int(items.len() as i64),
                Value::Str(s) => Value::Int(s.chars().count() as i64),
                other => return Err(self.fault(format!("len of {other}"))),
            },
            Builtin::AssertEquals => {
                if vals[0] != vals[1] {
                    return Err(self.fault_of(
                        FaultKind::Assertion,
                        format!("expected {} but was {}", vals[0].repr(), vals[1].repr()),
                    ));
                }
                Value::Void
            }
            Builtin::AssertTrue | Builtin::AssertFalse => {
                let want = b == Builtin::AssertTrue;
                if vals[0].as_bool() != Some(want) {
                    return Err(self.fault_of(
                        FaultKind::Assertion,
                        format!("expected {want} but was {}", !want),
                    ));
                }
                Value::Void
            }
            Builtin::AssertNear => {
                let (exp, act, eps) = (float(&vals[0]), float(&vals[1]), float(&vals[2]));
                // NaN anywhere must fail, hence not `> eps`
                let close = (exp - act).abs() <= eps;
                if !close {
                    return Err(self.fault_of(
                        FaultKind::Assertion,
                        format!(
                            "expected {} but was {} (tolerance {})",
                            format_float(exp),
                            format_float(act),
                            format_float(eps)
                        ),
                    ));
                }
                Value::Void
            }
            Builtin::ToFloat => Value::Float(float(&vals[0])),
            // saturating, NaN becomes 0
            Builtin::ToInt => Value::Int(float(&vals[0]) as i64),
            Builtin::Abs => match vals[0] {
                Value::Int(v) => Value::Int(v.wrapping_abs()),
                ref other => Value::Float(float(other).abs()),
            },
            Builtin::Sqrt => Value::Float(float(&vals[0]).sqrt()),
            Builtin::CharAt => {
                let s = string(&vals[0]);
                let i = vals[1].as_int().unwrap_or(-1);
                let n = s.chars().count();
                let at = checked_index(i, n).map_err(|m| self.fault(m))?;
                let c = s.chars().nth(at).expect("index checked");
                Value::Str(Arc::from(c.to_string()))
            }
            Builtin::Substring => {
                let s = string(&vals[0]);
                let (a, z) = (vals[1].as_int().unwrap_or(-1), vals[2].as_int().unwrap_or(-1));
                let n = s.chars().count();
                if a < 0 || z < a || z as usize > n {
                    return Err(self.fault(format!(
                        "substring range [{a}, {z}) out of bounds for length {n}"
                    )));
                }
                let out: String = s.chars().skip(a as usize).take((z - a) as usize).collect();
                Value::Str(Arc::from(out))
            }
            Builtin::Ord => {
                let s = string(&vals[0]);
                match s.chars().next() {
                    Some(c) => Value::Int(c as i64),
                    None => return Err(self.fault("ord of an empty string")),
                }
            }
            Builtin::Chr => {
                let code = vals[0].as_int().unwrap_or(-1);
                match u32::try_from(code).ok().and_then(char::from_u32) {
                    Some(c) => Value::Str(Arc::from(c.to_string())),
                    None => return Err(self.fault(format!("invalid character code {code}"))),
                }
            }
        })
    }
}

fn checked_index(i: i64, len: usize) -> Result<usize, String> {
    if i < 0 || i as u64 >= len as u64 {
        Err(format!("index {i} out of bounds for length {len}"))
    } else {
        Ok(i as usize)
    }
}

fn walk<'v>(mut cur: &'v mut Value, path: &[i64]) -> Result<&'v mut Value, String> {
    for &i in path {
        cur = match cur {
            Value::Array(items) => {
                let at = checked_index(i, items.len())?;
                &mut Arc::make_mut(items)[at]
            }
            other => return Err(format!("cannot index {other}")),
        };
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::super::{parse, SourceUnit};
    use super::*;

    fn program(body: &str) -> Program {
        parse(&SourceUnit::cut("C", format!("component C {{\n{body}\n}}"))).unwrap()
    }

    fn run_main(body: &str) -> ExecOutcome {
        run(&program(body), "main", &ExecLimits::default()).unwrap()
    }

    #[test]
    fn returns_sum() {
        let out = run_main("fn main(): int { return 1 + 2 }");
        assert_eq!(out.status, ExecStatus::Ok);
        assert_eq!(out.return_value, Some(Value::Int(3)));
    }

    #[test]
    fn infinite_loop_times_out() {
        let limits = ExecLimits {
            wall_timeout_ms: 200,
            ..ExecLimits::default()
        };
        let limits = ExecLimits {
            max_steps: u64::MAX,
            ..limits
        };
        let p = program("fn main() { while (true) { } }");
        let started = Instant::now();
        let out = run(&p, "main", &limits).unwrap();
        assert_eq!(out.status, ExecStatus::Timeout);
        assert_eq!(out.timeout, Some(TimeoutCause::WallClock));
        assert!(out.elapsed_ms >= 200);
        assert!(started.elapsed() < Duration::from_millis(400));
    }

    #[test]
    fn step_budget_times_out() {
        let limits = ExecLimits {
            max_steps: 1000,
            ..ExecLimits::default()
        };
        let out = run(&program("fn main() { while (true) { } }"), "main", &limits).unwrap();
        assert_eq!(out.timeout, Some(TimeoutCause::StepBudget));
    }

    #[test]
    fn cancellation_stops_a_run() {
        let flag = CancelFlag::new();
        flag.cancel();
        let out = run_with_cancel(
            &program("fn main() { while (true) { } }"),
            "main",
            &ExecLimits::default(),
            &flag,
        )
        .unwrap();
        assert_eq!(out.timeout, Some(TimeoutCause::Cancelled));
    }

    #[test]
    fn false_condition_hits_else_branch_only() {
        let out = run_main(
            "fn main(): int {\n    var x: int = 1\n    if (x > 5) {\n        x = 2\n    } else {\n        x = 3\n    }\n    return x\n}",
        );
        // lines: 3 var, 4 if, 5 then, 7 else body, 9 return
        assert_eq!(out.hit_lines, BTreeSet::from([3, 4, 7, 9]));
        assert_eq!(out.return_value, Some(Value::Int(3)));
    }

    #[test]
    fn runtime_errors() {
        let out = run_main("fn main(): int {\n var z: int = 0\n return 1 / z\n}");
        assert_eq!(out.status, ExecStatus::RuntimeError);
        let fault = out.fault.unwrap();
        assert_eq!(fault.message, "division by zero");
        assert_eq!(fault.line, 4);

        let out = run_main("fn main(): int { var a: array<int> = [1] return a[3] }");
        assert_eq!(out.fault.unwrap().message, "index 3 out of bounds for length 1");

        let out = run_main("fn main(): int { return main() }");
        assert_eq!(out.fault.unwrap().message, "stack overflow");
    }

    #[test]
    fn recursion_up_to_depth_limit_succeeds() {
        // main is frame 1, so the helper may use the remaining 255
        let helper = "fn depth(n: int): int { if (n <= 1) { return 1 } return 1 + depth(n - 1) }";
        let out = run_main(&format!("{helper}\nfn main(): int {{ return depth(255) }}"));
        assert_eq!(out.return_value, Some(Value::Int(255)));
        let out = run_main(&format!("{helper}\nfn main(): int {{ return depth(256) }}"));
        assert_eq!(out.fault.unwrap().message, "stack overflow");
    }

    #[test]
    fn arrays_have_value_semantics() {
        let out = run_main(
            "fn main(): int { var a: array<int> = [1, 2] var b: array<int> = a push(b, 3) b[0] = 9 return len(a) * 10 + a[0] }",
        );
        assert_eq!(out.return_value, Some(Value::Int(21)));
    }

    #[test]
    fn fields_are_fresh_per_run() {
        let p = program("var n: int = 1\nfn main(): int { n = n + 1 return n }");
        for _ in 0..2 {
            let out = run(&p, "main", &ExecLimits::default()).unwrap();
            assert_eq!(out.return_value, Some(Value::Int(2)));
            assert!(out.hit_lines.contains(&2));
        }
    }

    #[test]
    fn print_respects_log_limit() {
        let limits = ExecLimits {
            max_log_lines: 3,
            ..ExecLimits::default()
        };
        let p = program("fn main() { var i: int = 0 while (i < 10) { print(\"v=\" + i * 0.5) i = i + 1 } }");
        let out = run(&p, "main", &limits).unwrap();
        assert_eq!(out.log_lines, vec!["v=0.0", "v=0.5", "v=1.0"]);
        assert!(out.log_truncated);
    }

    #[test]
    fn string_builtins() {
        let out = run_main(
            "fn main(): string { return charAt(\"abc\", 1) + substring(\"hello\", 1, 3) + chr(ord(\"a\") + 1) }",
        );
        assert_eq!(out.return_value.unwrap().to_string(), "belb");
    }

    #[test]
    fn short_circuit_skips_faults() {
        let out = run_main("fn main(): bool { var a: array<int> = [] return len(a) > 0 && a[0] == 1 }");
        assert_eq!(out.return_value, Some(Value::Bool(false)));
    }

    #[test]
    fn entry_errors() {
        let p = program("fn f(x: int) { }");
        assert_eq!(
            run(&p, "nope", &ExecLimits::default()).unwrap_err(),
            EntryError::Unknown("nope".into())
        );
        assert_eq!(
            run(&p, "f", &ExecLimits::default()).unwrap_err(),
            EntryError::HasParameters("f".into())
        );
        let bad = ExecLimits {
            max_steps: 0,
            ..ExecLimits::default()
        };
        assert_eq!(run(&p, "f", &bad).unwrap_err(), EntryError::InvalidLimits);
    }
}
