use super::ast::*;
use super::lexer::{Tok, Token};
use super::{CompileError, Pos, UnitKind};

/// Nesting limit for blocks and expressions combined.
const MAX_DEPTH: usize = 200;

struct Parser<'a> {
    toks: &'a [Token],
    at: usize,
    depth: usize,
}

type PResult<T> = Result<T, CompileError>;

pub(crate) fn parse_unit(toks: &[Token], kind: UnitKind) -> PResult<Unit> {
    let mut p = Parser {
        toks,
        at: 0,
        depth: 0,
    };
    let unit = p.unit(kind)?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(p.unexpected("end of file"));
    }
    Ok(unit)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn advance(&mut self) -> &'a Token {
        let t = &self.toks[self.at];
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> CompileError {
        CompileError::new(
            format!("expected {wanted}, found {}", self.peek().describe()),
            self.pos(),
        )
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.advance().pos)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<(String, Pos)> {
        match self.peek() {
            Tok::Ident(name) => {
                let pos = self.advance().pos;
                Ok((name.clone(), pos))
            }
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(CompileError::new("nesting too deep", self.pos()))
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn unit(&mut self, kind: UnitKind) -> PResult<Unit> {
        let pos = self.pos();
        match (kind, self.peek()) {
            (UnitKind::Cut, Tok::Component) | (UnitKind::Test, Tok::Tests) => {
                self.advance();
            }
            (UnitKind::Cut, _) => return Err(self.unexpected("'component'")),
            (UnitKind::Test, _) => return Err(self.unexpected("'tests'")),
        }
        let (name, _) = self.ident("a name")?;
        self.expect(Tok::LBrace, "'{'")?;
        let mut fields = Vec::new();
        let mut functions = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.advance();
                    break;
                }
                Tok::Var => {
                    if kind == UnitKind::Test {
                        return Err(CompileError::new(
                            "test files cannot declare fields",
                            self.pos(),
                        ));
                    }
                    let pos = self.advance().pos;
                    let (name, ty, init) = self.var_rest()?;
                    self.eat(&Tok::Semi);
                    fields.push(FieldDecl {
                        name,
                        ty,
                        init,
                        pos,
                    });
                }
                Tok::Fn => functions.push(self.function()?),
                _ => return Err(self.unexpected("'var', 'fn' or '}'")),
            }
        }
        Ok(Unit {
            kind,
            name,
            fields,
            functions,
            pos,
        })
    }

    /// `name: type (= expr)?` after the `var` keyword.
    fn var_rest(&mut self) -> PResult<(String, Type, Option<Expr>)> {
        let (name, _) = self.ident("a variable name")?;
        self.expect(Tok::Colon, "':'")?;
        let ty = self.ty()?;
        let init = if self.eat(&Tok::Assign) {
            Some(self.expr()?)
        } else {
            None
        };
        Ok((name, ty, init))
    }

    fn ty(&mut self) -> PResult<Type> {
        let (name, pos) = self.ident("a type")?;
        Ok(match name.as_str() {
            "int" => Type::Int,
            "float" => Type::Float,
            "bool" => Type::Bool,
            "string" => Type::Str,
            "array" => {
                self.expect(Tok::Lt, "'<'")?;
                self.enter()?;
                let elem = self.ty()?;
                self.leave();
                self.expect(Tok::Gt, "'>'")?;
                Type::array_of(elem)
            }
            other => return Err(CompileError::new(format!("unknown type '{other}'"), pos)),
        })
    }

    fn function(&mut self) -> PResult<FnDecl> {
        let pos = self.expect(Tok::Fn, "'fn'")?;
        let (name, _) = self.ident("a function name")?;
        self.expect(Tok::LParen, "'('")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let (pname, ppos) = self.ident("a parameter name")?;
                self.expect(Tok::Colon, "':'")?;
                let ty = self.ty()?;
                params.push(Param {
                    name: pname,
                    ty,
                    pos: ppos,
                });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "',' or ')'")?;
            }
        }
        let ret = if self.eat(&Tok::Colon) {
            self.ty()?
        } else {
            Type::Void
        };
        let body = self.block()?;
        Ok(FnDecl {
            name,
            params,
            ret,
            body,
            pos,
        })
    }

    fn block(&mut self) -> PResult<Block> {
        self.expect(Tok::LBrace, "'{'")?;
        self.enter()?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if matches!(self.peek(), Tok::Eof) {
                return Err(self.unexpected("'}'"));
            }
            stmts.push(self.stmt()?);
            self.eat(&Tok::Semi);
        }
        self.leave();
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = match self.peek() {
            Tok::Var => {
                self.advance();
                let (name, ty, init) = self.var_rest()?;
                StmtKind::Var { name, ty, init }
            }
            Tok::If => return self.if_stmt(),
            Tok::While => {
                self.advance();
                let cond = self.paren_expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Return => {
                self.advance();
                let ends = matches!(self.peek(), Tok::RBrace | Tok::Semi | Tok::Eof)
                    || self.pos().line != pos.line;
                if ends {
                    StmtKind::Return(None)
                } else {
                    StmtKind::Return(Some(self.expr()?))
                }
            }
            Tok::Ident(_) => {
                let target = self.expr()?;
                if matches!(self.peek(), Tok::Assign) {
                    let at = self.advance().pos;
                    if !target.is_place() {
                        return Err(CompileError::new("cannot assign to this expression", at));
                    }
                    let value = self.expr()?;
                    StmtKind::Assign { target, value }
                } else if matches!(target.kind, ExprKind::Call(..)) {
                    StmtKind::Expr(target)
                } else {
                    return Err(CompileError::new("expression is not a statement", target.pos));
                }
            }
            _ => return Err(self.unexpected("a statement")),
        };
        Ok(Stmt { kind, pos })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.expect(Tok::If, "'if'")?;
        self.enter()?;
        let cond = self.paren_expr()?;
        let then = self.block()?;
        let els = if self.eat(&Tok::Else) {
            if matches!(self.peek(), Tok::If) {
                Some(Else::If(Box::new(self.if_stmt()?)))
            } else {
                Some(Else::Block(self.block()?))
            }
        } else {
            None
        };
        self.leave();
        Ok(Stmt {
            kind: StmtKind::If { cond, then, els },
            pos,
        })
    }

    fn paren_expr(&mut self) -> PResult<Expr> {
        self.expect(Tok::LParen, "'('")?;
        let e = self.expr()?;
        self.expect(Tok::RParen, "')'")?;
        Ok(e)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.unary()?;
        while let Some(op) = binary_op(self.peek()) {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let pos = self.advance().pos;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        self.leave();
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Tok::Minus => UnaryOp::Neg,
            Tok::Bang => UnaryOp::Not,
            _ => return self.postfix(),
        };
        let pos = self.advance().pos;
        self.enter()?;
        let operand = self.unary()?;
        self.leave();
        Ok(Expr {
            kind: ExprKind::Unary(op, Box::new(operand)),
            pos,
        })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while matches!(self.peek(), Tok::LBracket) {
            let pos = self.advance().pos;
            let index = self.expr()?;
            self.expect(Tok::RBracket, "']'")?;
            e = Expr {
                kind: ExprKind::Index(Box::new(e), Box::new(index)),
                pos,
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek() {
            Tok::Int(v) => {
                self.advance();
                ExprKind::Int(*v)
            }
            Tok::Float(v) => {
                self.advance();
                ExprKind::Float(*v)
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str(s.clone())
            }
            Tok::True => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::Ident(name) => {
                self.advance();
                if matches!(self.peek(), Tok::LParen) {
                    self.advance();
                    let args = self.list(Tok::RParen, "')'")?;
                    ExprKind::Call(name.clone(), args)
                } else {
                    ExprKind::Name(name.clone())
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                return Ok(e);
            }
            Tok::LBracket => {
                self.advance();
                ExprKind::Array(self.list(Tok::RBracket, "']'")?)
            }
            _ => return Err(self.unexpected("an expression")),
        };
        Ok(Expr { kind, pos })
    }

    fn list(&mut self, close: Tok, wanted: &str) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        if self.eat(&close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(&close) {
                return Ok(items);
            }
            if !matches!(self.peek(), Tok::Comma) {
                return Err(self.unexpected(&format!("',' or {wanted}")));
            }
            self.advance();
            // allow a trailing comma
            if self.eat(&close) {
                return Ok(items);
            }
        }
    }
}

fn binary_op(tok: &Tok) -> Option<BinaryOp> {
    Some(match tok {
        Tok::Plus => BinaryOp::Add,
        Tok::Minus => BinaryOp::Sub,
        Tok::Star => BinaryOp::Mul,
        Tok::Slash => BinaryOp::Div,
        Tok::Percent => BinaryOp::Rem,
        Tok::Lt => BinaryOp::Lt,
        Tok::Le => BinaryOp::Le,
        Tok::Gt => BinaryOp::Gt,
        Tok::Ge => BinaryOp::Ge,
        Tok::EqEq => BinaryOp::Eq,
        Tok::NotEq => BinaryOp::Ne,
        Tok::AndAnd => BinaryOp::And,
        Tok::OrOr => BinaryOp::Or,
        _ => return None,
    })
}
