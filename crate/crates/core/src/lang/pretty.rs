//! Canonical formatting. Printing a tree and parsing the result yields an
//! equal tree.

use std::fmt::Write;

use super::ast::{Block, Else, Expr, ExprKind, FnDecl, Stmt, StmtKind, Unit, UnaryOp};
use super::UnitKind;

const INDENT: &str = "    ";

pub fn unit(u: &Unit) -> String {
    let mut out = String::new();
    let keyword = match u.kind {
        UnitKind::Cut => "component",
        UnitKind::Test => "tests",
    };
    let _ = writeln!(out, "{keyword} {} {{", u.name);
    for field in &u.fields {
        let _ = write!(out, "{INDENT}var {}: {}", field.name, field.ty);
        if let Some(init) = &field.init {
            let _ = write!(out, " = {}", expr(init));
        }
        out.push('\n');
    }
    for (i, f) in u.functions.iter().enumerate() {
        if i > 0 || !u.fields.is_empty() {
            out.push('\n');
        }
        function(&mut out, f);
    }
    out.push_str("}\n");
    out
}

/// One function at component indentation, e.g. to show a single test.
pub fn function_text(f: &FnDecl) -> String {
    let mut out = String::new();
    function(&mut out, f);
    out
}

fn function(out: &mut String, f: &FnDecl) {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.ty))
        .collect();
    let _ = write!(out, "{INDENT}fn {}({})", f.name, params.join(", "));
    if f.ret != super::ast::Type::Void {
        let _ = write!(out, ": {}", f.ret);
    }
    out.push_str(" {\n");
    block_body(out, &f.body, 2);
    let _ = writeln!(out, "{INDENT}}}");
}

fn block_body(out: &mut String, b: &Block, depth: usize) {
    for s in &b.stmts {
        out.push_str(&INDENT.repeat(depth));
        stmt(out, s, depth);
        out.push('\n');
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Var { name, ty, init } => {
            let _ = write!(out, "var {name}: {ty}");
            if let Some(init) = init {
                let _ = write!(out, " = {}", expr(init));
            }
        }
        StmtKind::Assign { target, value } => {
            let _ = write!(out, "{} = {}", expr(target), expr(value));
        }
        StmtKind::If { cond, then, els } => {
            let _ = writeln!(out, "if ({}) {{", expr(cond));
            block_body(out, then, depth + 1);
            out.push_str(&INDENT.repeat(depth));
            out.push('}');
            match els {
                None => {}
                Some(Else::Block(b)) => {
                    out.push_str(" else {\n");
                    block_body(out, b, depth + 1);
                    out.push_str(&INDENT.repeat(depth));
                    out.push('}');
                }
                Some(Else::If(inner)) => {
                    out.push_str(" else ");
                    stmt(out, inner, depth);
                }
            }
        }
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while ({}) {{", expr(cond));
            block_body(out, body, depth + 1);
            out.push_str(&INDENT.repeat(depth));
            out.push('}');
        }
        StmtKind::Return(None) => out.push_str("return"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {}", expr(e));
        }
        StmtKind::Expr(e) => out.push_str(&expr(e)),
    }
}

/// Renders an expression with the minimum parentheses needed.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Float(v) => float_literal(*v),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => string_literal(s),
        ExprKind::Array(items) => format!("[{}]", list(items)),
        ExprKind::Name(n) => n.clone(),
        ExprKind::Index(base, index) => format!("{}[{}]", postfix_base(base), expr(index)),
        ExprKind::Call(name, args) => format!("{name}({})", list(args)),
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "!",
            };
            let operand = match inner.kind {
                ExprKind::Binary(..) | ExprKind::Unary(..) => format!("({})", expr(inner)),
                _ => expr(inner),
            };
            format!("{sym}{operand}")
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            let left = match &lhs.kind {
                ExprKind::Binary(l, ..) if l.precedence() < p => format!("({})", expr(lhs)),
                _ => expr(lhs),
            };
            let right = match &rhs.kind {
                ExprKind::Binary(r, ..) if r.precedence() <= p => format!("({})", expr(rhs)),
                _ => expr(rhs),
            };
            format!("{left} {} {right}", op.symbol())
        }
    }
}

fn postfix_base(e: &Expr) -> String {
    match e.kind {
        ExprKind::Unary(..) | ExprKind::Binary(..) => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn list(items: &[Expr]) -> String {
    items.iter().map(expr).collect::<Vec<_>>().join(", ")
}

fn float_literal(v: f64) -> String {
    if v.is_infinite() {
        // only reachable from overflowing literals such as 1e999
        return "1e999".to_string();
    }
    let s = format!("{v:?}");
    if s.contains(['.', 'e']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
