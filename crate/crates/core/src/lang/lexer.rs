use super::{CompileError, Pos};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    // keywords
    Component,
    Tests,
    Fn,
    Var,
    If,
    Else,
    While,
    Return,
    True,
    False,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Semi,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    NotEq,
    AndAnd,
    OrOr,
    Assign,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Float(v) => format!("number {v:?}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Eof => "end of file".to_string(),
            other => format!("'{}'", other.spelling()),
        }
    }

    fn spelling(&self) -> &'static str {
        match self {
            Tok::Component => "component",
            Tok::Tests => "tests",
            Tok::Fn => "fn",
            Tok::Var => "var",
            Tok::If => "if",
            Tok::Else => "else",
            Tok::While => "while",
            Tok::Return => "return",
            Tok::True => "true",
            Tok::False => "false",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Bang => "!",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Assign => "=",
            Tok::Ident(_) | Tok::Int(_) | Tok::Float(_) | Tok::Str(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.column)
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, CompileError> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        // whitespace and comments
        match cur.peek() {
            Some(c) if c.is_whitespace() => {
                cur.bump();
                continue;
            }
            Some('/') => {
                let mut probe = cur.chars.clone();
                probe.next();
                if probe.next() == Some('/') {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                    continue;
                }
            }
            _ => {}
        }
        let pos = cur.pos();
        let Some(c) = cur.bump() else {
            out.push(Token { tok: Tok::Eof, pos });
            return Ok(out);
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '%' => Tok::Percent,
            '!' => {
                if cur.eat('=') {
                    Tok::NotEq
                } else {
                    Tok::Bang
                }
            }
            '<' => {
                if cur.eat('=') {
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if cur.eat('=') {
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '=' => {
                if cur.eat('=') {
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            '&' => {
                if cur.eat('&') {
                    Tok::AndAnd
                } else {
                    return Err(CompileError::new("unexpected character '&'", pos));
                }
            }
            '|' => {
                if cur.eat('|') {
                    Tok::OrOr
                } else {
                    return Err(CompileError::new("unexpected character '|'", pos));
                }
            }
            '"' => lex_string(&mut cur, pos)?,
            c if c.is_ascii_digit() => lex_number(&mut cur, c, pos)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::from(c);
                while let Some(n) = cur.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        ident.push(n);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                keyword(&ident).unwrap_or(Tok::Ident(ident))
            }
            other => {
                return Err(CompileError::new(
                    format!("unexpected character {other:?}"),
                    pos,
                ))
            }
        };
        out.push(Token { tok, pos });
    }
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "component" => Tok::Component,
        "tests" => Tok::Tests,
        "fn" => Tok::Fn,
        "var" => Tok::Var,
        "if" => Tok::If,
        "else" => Tok::Else,
        "while" => Tok::While,
        "return" => Tok::Return,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

fn lex_string(cur: &mut Cursor<'_>, start: Pos) -> Result<Tok, CompileError> {
    let mut s = String::new();
    loop {
        let pos = cur.pos();
        match cur.bump() {
            None | Some('\n') => return Err(CompileError::new("unterminated string literal", start)),
            Some('"') => return Ok(Tok::Str(s)),
            Some('\\') => match cur.bump() {
                Some('n') => s.push('\n'),
                Some('t') => s.push('\t'),
                Some('"') => s.push('"'),
                Some('\\') => s.push('\\'),
                other => {
                    return Err(CompileError::new(
                        format!(
                            "unknown escape sequence '\\{}'",
                            other.map(String::from).unwrap_or_default()
                        ),
                        pos,
                    ))
                }
            },
            Some('\r') => {}
            Some(c) => s.push(c),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>, first: char, pos: Pos) -> Result<Tok, CompileError> {
    let mut text = String::from(first);
    let mut is_float = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            text.push(c);
            cur.bump();
        } else if c == '.' && !is_float {
            // require a digit after the dot
            let mut probe = cur.chars.clone();
            probe.next();
            if !matches!(probe.next(), Some(d) if d.is_ascii_digit()) {
                break;
            }
            is_float = true;
            text.push(c);
            cur.bump();
        } else if c == 'e' || c == 'E' {
            let mut probe = cur.chars.clone();
            probe.next();
            let next = probe.next();
            let ok = match next {
                Some(d) if d.is_ascii_digit() => true,
                Some('+') | Some('-') => matches!(probe.next(), Some(d) if d.is_ascii_digit()),
                _ => false,
            };
            if !ok {
                break;
            }
            is_float = true;
            text.push(c);
            cur.bump();
            if let Some(sign @ ('+' | '-')) = cur.peek() {
                text.push(sign);
                cur.bump();
            }
            while let Some(d) = cur.peek() {
                if d.is_ascii_digit() {
                    text.push(d);
                    cur.bump();
                } else {
                    break;
                }
            }
            break;
        } else {
            break;
        }
    }
    if let Some(c) = cur.peek() {
        if c.is_ascii_alphabetic() || c == '_' {
            return Err(CompileError::new(
                format!("invalid numeric literal '{text}{c}'"),
                pos,
            ));
        }
    }
    if is_float {
        text.parse::<f64>()
            .map(Tok::Float)
            .map_err(|_| CompileError::new(format!("invalid number '{text}'"), pos))
    } else {
        text.parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| CompileError::new(format!("integer literal '{text}' out of range"), pos))
    }
}
