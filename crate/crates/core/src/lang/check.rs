//! Name resolution, type checking and lowering of one component plus any
//! number of test units into an executable [`Image`].
//!
//! Unit 0 of an image is always the component. Test units see the
//! component's functions and may read (never modify) its fields.

use std::collections::HashMap;
use std::sync::Arc;

use super::ast::{self, BinaryOp, Else, Expr, ExprKind, StmtKind, Type, UnaryOp};
use super::value::Value;
use super::{CompileError, Pos, Program, UnitKind};

pub type UnitId = usize;
pub type FnId = usize;

/// A compile error together with the index of the unit it came from
/// (0 = component, `i + 1` = the i-th test unit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkError {
    pub unit: UnitId,
    pub error: CompileError,
}

#[derive(Debug, Clone)]
pub struct UnitInfo {
    pub name: String,
    pub kind: UnitKind,
    pub lines: u32,
}

#[derive(Debug)]
pub struct Image {
    pub units: Vec<UnitInfo>,
    pub(crate) fields: Vec<FieldIr>,
    pub(crate) functions: Vec<FnIr>,
    by_name: HashMap<(UnitId, String), FnId>,
}

#[derive(Debug)]
pub(crate) struct FieldIr {
    pub ty: Type,
    pub init: Option<Expr_>,
    pub line: u32,
}

#[derive(Debug)]
pub(crate) struct FnIr {
    pub name: String,
    pub unit: UnitId,
    pub params: Vec<Type>,
    pub locals: usize,
    pub body: Vec<Stmt_>,
}

/// Source site of a statement: where a hit is recorded and runtime errors
/// are reported.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Site {
    pub unit: UnitId,
    pub line: u32,
    pub counted: bool,
}

#[derive(Debug)]
pub(crate) enum Stmt_ {
    Let {
        slot: usize,
        init: Expr_,
        at: Site,
    },
    Assign {
        place: Place,
        value: Expr_,
        at: Site,
    },
    If {
        cond: Expr_,
        then: Vec<Stmt_>,
        els: Vec<Stmt_>,
        at: Site,
    },
    While {
        cond: Expr_,
        body: Vec<Stmt_>,
        at: Site,
    },
    Return {
        value: Option<Expr_>,
        at: Site,
    },
    Expr {
        expr: Expr_,
        at: Site,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Root {
    Local(usize),
    Field(usize),
}

#[derive(Debug)]
pub(crate) struct Place {
    pub root: Root,
    pub path: Vec<Expr_>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Num {
    Int,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Arith {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Builtin {
    Print,
    Len,
    AssertEquals,
    AssertTrue,
    AssertFalse,
    AssertNear,
    ToFloat,
    ToInt,
    Abs,
    Sqrt,
    CharAt,
    Substring,
    Ord,
    Chr,
}

/// Names that user code cannot redefine.
pub const BUILTINS: &[&str] = &[
    "print",
    "len",
    "push",
    "assertEquals",
    "assertTrue",
    "assertFalse",
    "assertNear",
    "toFloat",
    "toInt",
    "abs",
    "sqrt",
    "charAt",
    "substring",
    "ord",
    "chr",
];

#[derive(Debug)]
pub(crate) enum Expr_ {
    Const(Value),
    Local(usize),
    Field(usize),
    Index(Box<Expr_>, Box<Expr_>),
    Array(Vec<Expr_>),
    Call(FnId, Vec<Expr_>),
    Builtin(Builtin, Vec<Expr_>),
    Push(Place, Box<Expr_>),
    Neg(Num, Box<Expr_>),
    Not(Box<Expr_>),
    Arith(Arith, Num, Box<Expr_>, Box<Expr_>),
    Concat(Box<Expr_>, Box<Expr_>),
    Compare(Cmp, Box<Expr_>, Box<Expr_>),
    Equal(bool, Box<Expr_>, Box<Expr_>),
    And(Box<Expr_>, Box<Expr_>),
    Or(Box<Expr_>, Box<Expr_>),
    ToFloat(Box<Expr_>),
}

impl Image {
    /// Looks up a function visible from `unit`: its own, then the
    /// component's.
    pub fn function(&self, unit: UnitId, name: &str) -> Option<FnId> {
        self.by_name
            .get(&(unit, name.to_string()))
            .or_else(|| self.by_name.get(&(0, name.to_string())))
            .copied()
    }

    pub fn function_name(&self, id: FnId) -> &str {
        &self.functions[id].name
    }

    pub fn function_arity(&self, id: FnId) -> usize {
        self.functions[id].params.len()
    }

    pub fn function_unit(&self, id: FnId) -> UnitId {
        self.functions[id].unit
    }

    /// `test*` functions declared in a test unit, in source order.
    pub fn test_functions(&self, unit: UnitId) -> Vec<FnId> {
        self.functions
            .iter()
            .enumerate()
            .filter(|(_, f)| f.unit == unit && unit != 0 && f.name.starts_with("test"))
            .map(|(i, _)| i)
            .collect()
    }
}

type CResult<T> = Result<T, CompileError>;

struct Signature {
    params: Vec<Type>,
    ret: Type,
}

/// Links a component with zero or more test units.
pub fn link(component: &Program, tests: &[&Program]) -> Result<Image, LinkError> {
    let err0 = |error| LinkError { unit: 0, error };
    if component.kind() != UnitKind::Cut {
        return Err(err0(CompileError::new(
            "expected a component unit",
            component.ast.pos,
        )));
    }
    let mut units = vec![UnitInfo {
        name: component.name().to_string(),
        kind: UnitKind::Cut,
        lines: component.source_lines,
    }];
    let all: Vec<&Program> = std::iter::once(component).chain(tests.iter().copied()).collect();

    // signatures first so bodies may call in any order
    let mut by_name = HashMap::new();
    let mut sigs: Vec<Signature> = Vec::new();
    let mut decls: Vec<(UnitId, &ast::FnDecl)> = Vec::new();
    for (unit, program) in all.iter().enumerate() {
        let wrap = |error| LinkError { unit, error };
        if unit > 0 {
            if program.kind() != UnitKind::Test {
                return Err(wrap(CompileError::new("expected a test unit", program.ast.pos)));
            }
            if program.name() != component.name() {
                return Err(wrap(CompileError::new(
                    format!(
                        "tests target '{}' but the component is '{}'",
                        program.name(),
                        component.name()
                    ),
                    program.ast.pos,
                )));
            }
            units.push(UnitInfo {
                name: program.name().to_string(),
                kind: UnitKind::Test,
                lines: program.source_lines,
            });
        }
        for f in &program.ast.functions {
            if BUILTINS.contains(&f.name.as_str()) {
                return Err(wrap(CompileError::new(
                    format!("'{}' is a builtin and cannot be redefined", f.name),
                    f.pos,
                )));
            }
            if by_name.contains_key(&(unit, f.name.clone())) {
                return Err(wrap(CompileError::new(
                    format!("duplicate function '{}'", f.name),
                    f.pos,
                )));
            }
            if unit > 0 && by_name.contains_key(&(0, f.name.clone())) {
                return Err(wrap(CompileError::new(
                    format!("function '{}' is already defined in the component", f.name),
                    f.pos,
                )));
            }
            if unit > 0 && f.name.starts_with("test") {
                if !f.params.is_empty() {
                    return Err(wrap(CompileError::new(
                        format!("test function '{}' cannot take parameters", f.name),
                        f.pos,
                    )));
                }
                if f.ret != Type::Void {
                    return Err(wrap(CompileError::new(
                        format!("test function '{}' cannot return a value", f.name),
                        f.pos,
                    )));
                }
            }
            let mut seen = Vec::new();
            for p in &f.params {
                if seen.contains(&&p.name) {
                    return Err(wrap(CompileError::new(
                        format!("duplicate parameter '{}'", p.name),
                        p.pos,
                    )));
                }
                seen.push(&p.name);
            }
            by_name.insert((unit, f.name.clone()), sigs.len());
            sigs.push(Signature {
                params: f.params.iter().map(|p| p.ty.clone()).collect(),
                ret: f.ret.clone(),
            });
            decls.push((unit, f));
        }
    }

    let mut field_index = HashMap::new();
    let mut field_types = Vec::new();
    for field in &component.ast.fields {
        if field_index.contains_key(&field.name) {
            return Err(err0(CompileError::new(
                format!("duplicate field '{}'", field.name),
                field.pos,
            )));
        }
        if field.ty == Type::Void {
            return Err(err0(CompileError::new("fields cannot be void", field.pos)));
        }
        field_index.insert(field.name.clone(), field_types.len());
        field_types.push(field.ty.clone());
    }

    let env = Env {
        by_name: &by_name,
        sigs: &sigs,
        field_index: &field_index,
        field_types: &field_types,
    };

    // field initializers may only see earlier fields
    let mut fields = Vec::new();
    for (i, field) in component.ast.fields.iter().enumerate() {
        let init = match &field.init {
            Some(e) => {
                let mut fc = FnChecker::new(&env, 0, Type::Void);
                fc.visible_fields = i;
                let ir = fc.coerce_expr(e, &field.ty).map_err(err0)?;
                Some(ir)
            }
            None => None,
        };
        fields.push(FieldIr {
            ty: field.ty.clone(),
            init,
            line: field.pos.line,
        });
    }

    let mut functions = Vec::new();
    for (unit, decl) in decls {
        let mut fc = FnChecker::new(&env, unit, decl.ret.clone());
        let body = fc
            .function(decl)
            .map_err(|error| LinkError { unit, error })?;
        functions.push(FnIr {
            name: decl.name.clone(),
            unit,
            params: decl.params.iter().map(|p| p.ty.clone()).collect(),
            locals: fc.max_slots,
            body,
        });
    }

    Ok(Image {
        units,
        fields,
        functions,
        by_name,
    })
}

/// Convenience wrapper used where an image must be shared across threads.
pub fn link_shared(component: &Program, tests: &[&Program]) -> Result<Arc<Image>, LinkError> {
    link(component, tests).map(Arc::new)
}

struct Env<'a> {
    by_name: &'a HashMap<(UnitId, String), FnId>,
    sigs: &'a [Signature],
    field_index: &'a HashMap<String, usize>,
    field_types: &'a [Type],
}

struct FnChecker<'a> {
    env: &'a Env<'a>,
    unit: UnitId,
    ret: Type,
    scopes: Vec<HashMap<String, (usize, Type)>>,
    next_slot: usize,
    max_slots: usize,
    visible_fields: usize,
}

fn mismatch(expected: &Type, found: &Type, pos: Pos) -> CompileError {
    CompileError::new(format!("expected {expected}, found {found}"), pos)
}

impl<'a> FnChecker<'a> {
    fn new(env: &'a Env<'a>, unit: UnitId, ret: Type) -> Self {
        Self {
            env,
            unit,
            ret,
            scopes: vec![HashMap::new()],
            next_slot: 0,
            max_slots: 0,
            visible_fields: env.field_types.len(),
        }
    }

    fn function(&mut self, decl: &ast::FnDecl) -> CResult<Vec<Stmt_>> {
        for p in &decl.params {
            if p.ty == Type::Void {
                return Err(CompileError::new("parameters cannot be void", p.pos));
            }
            self.declare(&p.name, p.ty.clone(), p.pos)?;
        }
        let body = self.block_in_scope(&decl.body)?;
        if decl.ret != Type::Void && !block_returns(&decl.body) {
            return Err(CompileError::new(
                format!(
                    "function '{}' may finish without returning a value",
                    decl.name
                ),
                decl.pos,
            ));
        }
        Ok(body)
    }

    fn site(&self, pos: Pos, counted: bool) -> Site {
        Site {
            unit: self.unit,
            line: pos.line,
            counted,
        }
    }

    fn declare(&mut self, name: &str, ty: Type, pos: Pos) -> CResult<usize> {
        if self.scopes.iter().any(|s| s.contains_key(name)) {
            return Err(CompileError::new(
                format!("variable '{name}' is already declared"),
                pos,
            ));
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.max_slots = self.max_slots.max(self.next_slot);
        self.scopes
            .last_mut()
            .expect("scope stack never empty")
            .insert(name.to_string(), (slot, ty));
        Ok(slot)
    }

    fn block_in_scope(&mut self, block: &ast::Block) -> CResult<Vec<Stmt_>> {
        self.scopes.push(HashMap::new());
        let saved = self.next_slot;
        let out = block
            .stmts
            .iter()
            .map(|s| self.stmt(s))
            .collect::<CResult<Vec<_>>>();
        self.scopes.pop();
        self.next_slot = saved;
        out
    }

    fn stmt(&mut self, stmt: &ast::Stmt) -> CResult<Stmt_> {
        let pos = stmt.pos;
        Ok(match &stmt.kind {
            StmtKind::Var { name, ty, init } => {
                if *ty == Type::Void {
                    return Err(CompileError::new("variables cannot be void", pos));
                }
                let (init, counted) = match init {
                    Some(e) => (self.coerce_expr(e, ty)?, true),
                    None => (Expr_::Const(Value::default_for(ty)), false),
                };
                // declared after the initializer so `var x = x` is rejected
                let slot = self.declare(name, ty.clone(), pos)?;
                Stmt_::Let {
                    slot,
                    init,
                    at: self.site(pos, counted),
                }
            }
            StmtKind::Assign { target, value } => {
                let (place, ty) = self.place(target)?;
                let value = self.coerce_expr(value, &ty)?;
                Stmt_::Assign {
                    place,
                    value,
                    at: self.site(pos, true),
                }
            }
            StmtKind::If { cond, then, els } => {
                let cond = self.coerce_expr(cond, &Type::Bool)?;
                let then = self.block_in_scope(then)?;
                let els = match els {
                    None => Vec::new(),
                    Some(Else::Block(b)) => self.block_in_scope(b)?,
                    Some(Else::If(s)) => vec![self.stmt(s)?],
                };
                Stmt_::If {
                    cond,
                    then,
                    els,
                    at: self.site(pos, true),
                }
            }
            StmtKind::While { cond, body } => {
                let cond = self.coerce_expr(cond, &Type::Bool)?;
                let body = self.block_in_scope(body)?;
                Stmt_::While {
                    cond,
                    body,
                    at: self.site(pos, true),
                }
            }
            StmtKind::Return(value) => {
                let value = match (value, &self.ret) {
                    (None, Type::Void) => None,
                    (None, ret) => {
                        return Err(CompileError::new(
                            format!("missing return value of type {ret}"),
                            pos,
                        ))
                    }
                    (Some(e), Type::Void) => {
                        return Err(CompileError::new(
                            "a function without a return type cannot return a value",
                            e.pos,
                        ))
                    }
                    (Some(e), ret) => {
                        let ret = ret.clone();
                        Some(self.coerce_expr(e, &ret)?)
                    }
                };
                Stmt_::Return {
                    value,
                    at: self.site(pos, true),
                }
            }
            StmtKind::Expr(e) => {
                let (expr, _) = self.expr_allow_void(e, None)?;
                Stmt_::Expr {
                    expr,
                    at: self.site(pos, true),
                }
            }
        })
    }

    /// Resolves an assignable place and checks it may be modified here.
    fn place(&mut self, target: &Expr) -> CResult<(Place, Type)> {
        match &target.kind {
            ExprKind::Name(name) => {
                if let Some((slot, ty)) = self.lookup_local(name) {
                    return Ok((
                        Place {
                            root: Root::Local(slot),
                            path: Vec::new(),
                        },
                        ty,
                    ));
                }
                if let Some(idx) = self.lookup_field(name) {
                    if self.unit != 0 {
                        return Err(CompileError::new(
                            format!("cannot modify component field '{name}' from tests"),
                            target.pos,
                        ));
                    }
                    return Ok((
                        Place {
                            root: Root::Field(idx),
                            path: Vec::new(),
                        },
                        self.env.field_types[idx].clone(),
                    ));
                }
                Err(CompileError::new(
                    format!("unknown identifier '{name}'"),
                    target.pos,
                ))
            }
            ExprKind::Index(base, index) => {
                let (mut place, ty) = self.place(base)?;
                let Type::Array(elem) = ty else {
                    return Err(CompileError::new(
                        format!("cannot index a value of type {ty}"),
                        target.pos,
                    ));
                };
                place.path.push(self.coerce_expr(index, &Type::Int)?);
                Ok((place, *elem))
            }
            _ => Err(CompileError::new(
                "cannot assign to this expression",
                target.pos,
            )),
        }
    }

    fn lookup_local(&self, name: &str) -> Option<(usize, Type)> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name))
            .map(|(slot, ty)| (*slot, ty.clone()))
    }

    fn lookup_field(&self, name: &str) -> Option<usize> {
        self.env
            .field_index
            .get(name)
            .copied()
            .filter(|i| *i < self.visible_fields)
    }

    fn coerce_expr(&mut self, e: &Expr, want: &Type) -> CResult<Expr_> {
        let (ir, ty) = self.expr(e, Some(want))?;
        coerce(ir, &ty, want, e.pos)
    }

    fn expr(&mut self, e: &Expr, expected: Option<&Type>) -> CResult<(Expr_, Type)> {
        let (ir, ty) = self.expr_allow_void(e, expected)?;
        if ty == Type::Void {
            let what = match &e.kind {
                ExprKind::Call(name, _) => format!("'{name}' does not return a value"),
                _ => "expression has no value".to_string(),
            };
            return Err(CompileError::new(what, e.pos));
        }
        Ok((ir, ty))
    }

    fn numeric(&mut self, e: &Expr) -> CResult<(Expr_, Type)> {
        let (ir, ty) = self.expr(e, None)?;
        if !ty.is_numeric() {
            return Err(CompileError::new(
                format!("expected a number, found {ty}"),
                e.pos,
            ));
        }
        Ok((ir, ty))
    }

    fn expr_allow_void(&mut self, e: &Expr, expected: Option<&Type>) -> CResult<(Expr_, Type)> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Int(v) => (Expr_::Const(Value::Int(*v)), Type::Int),
            ExprKind::Float(v) => (Expr_::Const(Value::Float(*v)), Type::Float),
            ExprKind::Bool(b) => (Expr_::Const(Value::Bool(*b)), Type::Bool),
            ExprKind::Str(s) => (Expr_::Const(Value::Str(Arc::from(s.as_str()))), Type::Str),
            ExprKind::Name(name) => {
                if let Some((slot, ty)) = self.lookup_local(name) {
                    (Expr_::Local(slot), ty)
                } else if let Some(idx) = self.lookup_field(name) {
                    (Expr_::Field(idx), self.env.field_types[idx].clone())
                } else {
                    return Err(CompileError::new(
                        format!("unknown identifier '{name}'"),
                        pos,
                    ));
                }
            }
            ExprKind::Array(items) => {
                let want_elem = match expected {
                    Some(Type::Array(elem)) => Some((**elem).clone()),
                    _ => None,
                };
                if items.is_empty() {
                    let Some(elem) = want_elem else {
                        return Err(CompileError::new(
                            "cannot infer the element type of an empty array",
                            pos,
                        ));
                    };
                    (Expr_::Array(Vec::new()), Type::array_of(elem))
                } else {
                    let elem = match want_elem {
                        Some(t) => t,
                        None => {
                            // widest element type: any float makes it float
                            let mut tys = Vec::new();
                            for item in items {
                                tys.push(self.expr(item, None)?.1);
                            }
                            if tys.iter().all(Type::is_numeric)
                                && tys.contains(&Type::Float)
                            {
                                Type::Float
                            } else {
                                tys.swap_remove(0)
                            }
                        }
                    };
                    let irs = items
                        .iter()
                        .map(|item| self.coerce_expr(item, &elem))
                        .collect::<CResult<Vec<_>>>()?;
                    (Expr_::Array(irs), Type::array_of(elem))
                }
            }
            ExprKind::Index(base, index) => {
                let (b, bty) = self.expr(base, None)?;
                let Type::Array(elem) = bty else {
                    return Err(CompileError::new(
                        format!("cannot index a value of type {bty}"),
                        pos,
                    ));
                };
                let i = self.coerce_expr(index, &Type::Int)?;
                (Expr_::Index(Box::new(b), Box::new(i)), *elem)
            }
            ExprKind::Call(name, args) => self.call(name, args, pos)?,
            ExprKind::Unary(UnaryOp::Neg, inner) => {
                let (ir, ty) = self.numeric(inner)?;
                let num = if ty == Type::Int { Num::Int } else { Num::Float };
                (Expr_::Neg(num, Box::new(ir)), ty)
            }
            ExprKind::Unary(UnaryOp::Not, inner) => {
                let ir = self.coerce_expr(inner, &Type::Bool)?;
                (Expr_::Not(Box::new(ir)), Type::Bool)
            }
            ExprKind::Binary(op, l, r) => self.binary(*op, l, r, pos)?,
        })
    }

    fn binary(&mut self, op: BinaryOp, l: &Expr, r: &Expr, pos: Pos) -> CResult<(Expr_, Type)> {
        use BinaryOp::*;
        match op {
            And | Or => {
                let a = self.coerce_expr(l, &Type::Bool)?;
                let b = self.coerce_expr(r, &Type::Bool)?;
                let ir = if op == And {
                    Expr_::And(Box::new(a), Box::new(b))
                } else {
                    Expr_::Or(Box::new(a), Box::new(b))
                };
                return Ok((ir, Type::Bool));
            }
            _ => {}
        }
        let (a, at) = self.expr(l, None)?;
        let (b, bt) = self.expr(r, None)?;
        let bad = || {
            CompileError::new(
                format!(
                    "operator '{}' cannot be applied to {at} and {bt}",
                    op.symbol()
                ),
                pos,
            )
        };
        match op {
            Add if at == Type::Str || bt == Type::Str => {
                Ok((Expr_::Concat(Box::new(a), Box::new(b)), Type::Str))
            }
            Add | Sub | Mul | Div | Rem => {
                if !(at.is_numeric() && bt.is_numeric()) {
                    return Err(bad());
                }
                let arith = match op {
                    Add => Arith::Add,
                    Sub => Arith::Sub,
                    Mul => Arith::Mul,
                    Div => Arith::Div,
                    _ => Arith::Rem,
                };
                if at == Type::Int && bt == Type::Int {
                    Ok((
                        Expr_::Arith(arith, Num::Int, Box::new(a), Box::new(b)),
                        Type::Int,
                    ))
                } else {
                    let a = coerce(a, &at, &Type::Float, pos)?;
                    let b = coerce(b, &bt, &Type::Float, pos)?;
                    Ok((
                        Expr_::Arith(arith, Num::Float, Box::new(a), Box::new(b)),
                        Type::Float,
                    ))
                }
            }
            Lt | Le | Gt | Ge => {
                let ok = (at.is_numeric() && bt.is_numeric())
                    || (at == Type::Str && bt == Type::Str);
                if !ok {
                    return Err(bad());
                }
                let cmp = match op {
                    Lt => Cmp::Lt,
                    Le => Cmp::Le,
                    Gt => Cmp::Gt,
                    _ => Cmp::Ge,
                };
                Ok((Expr_::Compare(cmp, Box::new(a), Box::new(b)), Type::Bool))
            }
            Eq | Ne => {
                if !comparable(&at, &bt) {
                    return Err(bad());
                }
                Ok((Expr_::Equal(op == Ne, Box::new(a), Box::new(b)), Type::Bool))
            }
            And | Or => unreachable!("handled above"),
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> CResult<(Expr_, Type)> {
        if BUILTINS.contains(&name) {
            return self.builtin(name, args, pos);
        }
        let id = self
            .env
            .by_name
            .get(&(self.unit, name.to_string()))
            .or_else(|| self.env.by_name.get(&(0, name.to_string())))
            .copied()
            .ok_or_else(|| CompileError::new(format!("unknown function '{name}'"), pos))?;
        let sig = &self.env.sigs[id];
        if sig.params.len() != args.len() {
            return Err(CompileError::new(
                format!(
                    "function '{name}' expects {} argument(s) but got {}",
                    sig.params.len(),
                    args.len()
                ),
                pos,
            ));
        }
        let params = sig.params.clone();
        let ret = sig.ret.clone();
        let irs = args
            .iter()
            .zip(&params)
            .map(|(a, t)| self.coerce_expr(a, t))
            .collect::<CResult<Vec<_>>>()?;
        Ok((Expr_::Call(id, irs), ret))
    }

    fn builtin(&mut self, name: &str, args: &[Expr], pos: Pos) -> CResult<(Expr_, Type)> {
        let arity = |n: usize| -> CResult<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(CompileError::new(
                    format!("'{name}' expects {n} argument(s) but got {}", args.len()),
                    pos,
                ))
            }
        };
        let test_only = |unit: UnitId| -> CResult<()> {
            if unit == 0 {
                Err(CompileError::new(
                    format!("'{name}' is only available in tests"),
                    pos,
                ))
            } else {
                Ok(())
            }
        };
        use Builtin as B;
        let (b, irs, ty) = match name {
            "print" => {
                arity(1)?;
                let (ir, _) = self.expr(&args[0], None)?;
                (B::Print, vec![ir], Type::Void)
            }
            "len" => {
                arity(1)?;
                let (ir, ty) = self.expr(&args[0], None)?;
                if !matches!(ty, Type::Array(_) | Type::Str) {
                    return Err(CompileError::new(
                        format!("'len' expects an array or string, found {ty}"),
                        args[0].pos,
                    ));
                }
                (B::Len, vec![ir], Type::Int)
            }
            "push" => {
                arity(2)?;
                if !args[0].is_place() {
                    return Err(CompileError::new(
                        "'push' needs a variable, field or element as its first argument",
                        args[0].pos,
                    ));
                }
                let (place, ty) = self.place(&args[0])?;
                let Type::Array(elem) = ty else {
                    return Err(CompileError::new(
                        format!("'push' expects an array, found {ty}"),
                        args[0].pos,
                    ));
                };
                let v = self.coerce_expr(&args[1], &elem)?;
                return Ok((Expr_::Push(place, Box::new(v)), Type::Void));
            }
            "assertEquals" => {
                test_only(self.unit)?;
                arity(2)?;
                let (a, at) = self.expr(&args[0], None)?;
                let (b, bt) = self.expr(&args[1], Some(&at))?;
                if !comparable(&at, &bt) {
                    return Err(CompileError::new(
                        format!("cannot compare {at} with {bt}"),
                        pos,
                    ));
                }
                (B::AssertEquals, vec![a, b], Type::Void)
            }
            "assertTrue" | "assertFalse" => {
                test_only(self.unit)?;
                arity(1)?;
                let ir = self.coerce_expr(&args[0], &Type::Bool)?;
                let b = if name == "assertTrue" {
                    B::AssertTrue
                } else {
                    B::AssertFalse
                };
                (b, vec![ir], Type::Void)
            }
            "assertNear" => {
                test_only(self.unit)?;
                arity(3)?;
                let irs = args
                    .iter()
                    .map(|a| self.coerce_expr(a, &Type::Float))
                    .collect::<CResult<Vec<_>>>()?;
                (B::AssertNear, irs, Type::Void)
            }
            "toFloat" => {
                arity(1)?;
                (
                    B::ToFloat,
                    vec![self.coerce_expr(&args[0], &Type::Float)?],
                    Type::Float,
                )
            }
            "toInt" => {
                arity(1)?;
                (
                    B::ToInt,
                    vec![self.coerce_expr(&args[0], &Type::Float)?],
                    Type::Int,
                )
            }
            "abs" => {
                arity(1)?;
                let (ir, ty) = self.numeric(&args[0])?;
                (B::Abs, vec![ir], ty)
            }
            "sqrt" => {
                arity(1)?;
                (
                    B::Sqrt,
                    vec![self.coerce_expr(&args[0], &Type::Float)?],
                    Type::Float,
                )
            }
            "charAt" => {
                arity(2)?;
                let s = self.coerce_expr(&args[0], &Type::Str)?;
                let i = self.coerce_expr(&args[1], &Type::Int)?;
                (B::CharAt, vec![s, i], Type::Str)
            }
            "substring" => {
                arity(3)?;
                let s = self.coerce_expr(&args[0], &Type::Str)?;
                let a = self.coerce_expr(&args[1], &Type::Int)?;
                let b = self.coerce_expr(&args[2], &Type::Int)?;
                (B::Substring, vec![s, a, b], Type::Str)
            }
            "ord" => {
                arity(1)?;
                (
                    B::Ord,
                    vec![self.coerce_expr(&args[0], &Type::Str)?],
                    Type::Int,
                )
            }
            "chr" => {
                arity(1)?;
                (
                    B::Chr,
                    vec![self.coerce_expr(&args[0], &Type::Int)?],
                    Type::Str,
                )
            }
            _ => unreachable!("BUILTINS and this match must agree"),
        };
        Ok((Expr_::Builtin(b, irs), ty))
    }
}

fn comparable(a: &Type, b: &Type) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

fn coerce(ir: Expr_, from: &Type, to: &Type, pos: Pos) -> CResult<Expr_> {
    if from == to {
        Ok(ir)
    } else if *from == Type::Int && *to == Type::Float {
        Ok(match ir {
            Expr_::Const(Value::Int(v)) => Expr_::Const(Value::Float(v as f64)),
            other => Expr_::ToFloat(Box::new(other)),
        })
    } else {
        Err(mismatch(to, from, pos))
    }
}

fn block_returns(block: &ast::Block) -> bool {
    block.stmts.iter().any(stmt_returns)
}

fn stmt_returns(stmt: &ast::Stmt) -> bool {
    match &stmt.kind {
        StmtKind::Return(_) => true,
        StmtKind::If {
            then,
            els: Some(els),
            ..
        } => {
            block_returns(then)
                && match els {
                    Else::Block(b) => block_returns(b),
                    Else::If(s) => stmt_returns(s),
                }
        }
        StmtKind::While { cond, .. } => matches!(cond.kind, ExprKind::Bool(true)),
        _ => false,
    }
}
