//! Lexer and recursive-descent parser for the mini language.
//!
//! Grammar (EBNF):
//! ```text
//! program := decl* stmt*
//! decl    := "int" IDENT ("=" (INT | "-" INT | "*"))? ";"
//! stmt    := IDENT "=" iexpr ";" | "skip" ";" | "break" ";"
//!          | "if" "(" bexpr ")" block ("else" (block | if-stmt))?
//!          | "while" "(" bexpr ")" block
//! block   := "{" stmt* "}"
//! bexpr   := bterm ("||" bterm)*
//! bterm   := bfactor ("&&" bfactor)*
//! bfactor := "true" | "false" | "!" bfactor | cmp | "(" bexpr ")"
//! cmp     := iexpr ("=="|"!="|"<="|">="|"<"|">") iexpr
//! iexpr   := term (("+"|"-") term)*
//! term    := unary ("*" unary)*
//! unary   := "-" unary | INT | IDENT | "(" iexpr ")"
//! ```
//! Line comments start with `//`. A `bfactor` that opens with `(` is
//! disambiguated by scanning ahead for a comparison operator at depth zero.

use super::ast::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: unexpected character '{ch}'")]
    BadChar { line: u32, col: u32, ch: char },
    #[error("{line}:{col}: integer literal out of range")]
    IntRange { line: u32, col: u32 },
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Unexpected {
        line: u32,
        col: u32,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: duplicate declaration of '{name}'")]
    DuplicateDecl { line: u32, col: u32, name: String },
    #[error("{line}:{col}: use of undeclared variable '{name}'")]
    Undeclared { line: u32, col: u32, name: String },
    #[error("{line}:{col}: 'break' outside of a loop")]
    StrayBreak { line: u32, col: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    KwInt,
    KwIf,
    KwElse,
    KwWhile,
    KwSkip,
    KwBreak,
    KwTrue,
    KwFalse,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Assign,
    Star,
    Plus,
    Minus,
    EqEq,
    NotEq,
    Le,
    Ge,
    Lt,
    Gt,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(n) => return write!(f, "identifier '{n}'"),
            Tok::Int(v) => return write!(f, "integer {v}"),
            Tok::KwInt => "'int'",
            Tok::KwIf => "'if'",
            Tok::KwElse => "'else'",
            Tok::KwWhile => "'while'",
            Tok::KwSkip => "'skip'",
            Tok::KwBreak => "'break'",
            Tok::KwTrue => "'true'",
            Tok::KwFalse => "'false'",
            Tok::LParen => "'('",
            Tok::RParen => "')'",
            Tok::LBrace => "'{'",
            Tok::RBrace => "'}'",
            Tok::Semi => "';'",
            Tok::Assign => "'='",
            Tok::Star => "'*'",
            Tok::Plus => "'+'",
            Tok::Minus => "'-'",
            Tok::EqEq => "'=='",
            Tok::NotEq => "'!='",
            Tok::Le => "'<='",
            Tok::Ge => "'>='",
            Tok::Lt => "'<'",
            Tok::Gt => "'>'",
            Tok::AndAnd => "'&&'",
            Tok::OrOr => "'||'",
            Tok::Bang => "'!'",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

type Spanned = (Tok, u32, u32);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(b) = self.peek() {
                if b.is_ascii_whitespace() {
                    self.bump();
                } else if b == b'/' && self.peek2() == Some(b'/') {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(b) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match b {
                b'(' => { self.bump(); Tok::LParen }
                b')' => { self.bump(); Tok::RParen }
                b'{' => { self.bump(); Tok::LBrace }
                b'}' => { self.bump(); Tok::RBrace }
                b';' => { self.bump(); Tok::Semi }
                b'*' => { self.bump(); Tok::Star }
                b'+' => { self.bump(); Tok::Plus }
                b'-' => { self.bump(); Tok::Minus }
                b'=' => {
                    self.bump();
                    if self.peek() == Some(b'=') { self.bump(); Tok::EqEq } else { Tok::Assign }
                }
                b'!' => {
                    self.bump();
                    if self.peek() == Some(b'=') { self.bump(); Tok::NotEq } else { Tok::Bang }
                }
                b'<' => {
                    self.bump();
                    if self.peek() == Some(b'=') { self.bump(); Tok::Le } else { Tok::Lt }
                }
                b'>' => {
                    self.bump();
                    if self.peek() == Some(b'=') { self.bump(); Tok::Ge } else { Tok::Gt }
                }
                b'&' if self.peek2() == Some(b'&') => { self.bump(); self.bump(); Tok::AndAnd }
                b'|' if self.peek2() == Some(b'|') => { self.bump(); self.bump(); Tok::OrOr }
                b'0'..=b'9' => {
                    let mut v: u64 = 0;
                    while let Some(c @ b'0'..=b'9') = self.peek() {
                        v = v
                            .checked_mul(10)
                            .and_then(|v| v.checked_add((c - b'0') as u64))
                            .ok_or(ParseError::IntRange { line, col })?;
                        self.bump();
                    }
                    Tok::Int(v)
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    match word {
                        "int" => Tok::KwInt,
                        "if" => Tok::KwIf,
                        "else" => Tok::KwElse,
                        "while" => Tok::KwWhile,
                        "skip" => Tok::KwSkip,
                        "break" => Tok::KwBreak,
                        "true" => Tok::KwTrue,
                        "false" => Tok::KwFalse,
                        _ => Tok::Ident(word.to_string()),
                    }
                }
                other => {
                    return Err(ParseError::BadChar { line, col, ch: other as char });
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    next_loc: u32,
    decls: Vec<String>,
    loop_depth: u32,
}

impl Parser {
    fn cur(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, expected: &str) -> ParseError {
        let (tok, line, col) = self.cur().clone();
        ParseError::Unexpected { line, col, expected: expected.to_string(), found: tok.to_string() }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if self.cur().0 == want {
            self.advance();
            Ok(())
        } else {
            Err(self.err_here(&want.to_string()))
        }
    }

    fn eat(&mut self, want: Tok) -> bool {
        if self.cur().0 == want {
            self.advance();
            true
        } else {
            false
        }
    }

    fn fresh_loc(&mut self) -> Loc {
        self.next_loc += 1;
        Loc(self.next_loc)
    }

    fn int_lit(&mut self, negative: bool) -> Result<i64, ParseError> {
        let (tok, line, col) = self.advance();
        let Tok::Int(v) = tok else {
            return Err(ParseError::Unexpected {
                line,
                col,
                expected: "integer literal".to_string(),
                found: tok.to_string(),
            });
        };
        let signed = if negative { -(v as i128) } else { v as i128 };
        i64::try_from(signed).map_err(|_| ParseError::IntRange { line, col })
    }

    fn check_declared(&self, name: &str, line: u32, col: u32) -> Result<(), ParseError> {
        if self.decls.iter().any(|d| d == name) {
            Ok(())
        } else {
            Err(ParseError::Undeclared { line, col, name: name.to_string() })
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut decls = Vec::new();
        while self.cur().0 == Tok::KwInt {
            self.advance();
            let (tok, line, col) = self.advance();
            let Tok::Ident(name) = tok else {
                return Err(ParseError::Unexpected {
                    line,
                    col,
                    expected: "identifier".to_string(),
                    found: tok.to_string(),
                });
            };
            if self.decls.iter().any(|d| *d == name) {
                return Err(ParseError::DuplicateDecl { line, col, name });
            }
            let init = if self.eat(Tok::Assign) {
                match self.cur().0 {
                    Tok::Star => {
                        self.advance();
                        Init::Nondet
                    }
                    Tok::Minus => {
                        self.advance();
                        Init::Const(self.int_lit(true)?)
                    }
                    _ => Init::Const(self.int_lit(false)?),
                }
            } else {
                Init::Unset
            };
            self.expect(Tok::Semi)?;
            self.decls.push(name.clone());
            decls.push(Decl { name, init });
        }
        let mut body = Vec::new();
        while self.cur().0 != Tok::Eof {
            body.push(self.stmt()?);
        }
        Ok(Program { decls, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        while self.cur().0 != Tok::RBrace {
            if self.cur().0 == Tok::Eof {
                return Err(self.err_here("'}'"));
            }
            out.push(self.stmt()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match self.cur().0.clone() {
            Tok::KwSkip => {
                self.advance();
                self.expect(Tok::Semi)?;
                Ok(Stmt::Skip)
            }
            Tok::KwBreak => {
                let (_, line, col) = self.advance();
                if self.loop_depth == 0 {
                    return Err(ParseError::StrayBreak { line, col });
                }
                self.expect(Tok::Semi)?;
                Ok(Stmt::Break)
            }
            Tok::KwIf => {
                self.advance();
                let loc = self.fresh_loc();
                self.expect(Tok::LParen)?;
                let cond = self.bexpr()?;
                self.expect(Tok::RParen)?;
                let then_branch = self.block()?;
                let else_branch = if self.eat(Tok::KwElse) {
                    if self.cur().0 == Tok::KwIf {
                        vec![self.stmt()?]
                    } else {
                        self.block()?
                    }
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { loc: Some(loc), cond, then_branch, else_branch })
            }
            Tok::KwWhile => {
                self.advance();
                let loc = self.fresh_loc();
                self.expect(Tok::LParen)?;
                let cond = self.bexpr()?;
                self.expect(Tok::RParen)?;
                self.loop_depth += 1;
                let body = self.block()?;
                self.loop_depth -= 1;
                Ok(Stmt::While { loc: Some(loc), cond, body })
            }
            Tok::Ident(name) => {
                let (_, line, col) = self.advance();
                self.check_declared(&name, line, col)?;
                self.expect(Tok::Assign)?;
                let rhs = self.iexpr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Assign(name, rhs))
            }
            _ => Err(self.err_here("a statement")),
        }
    }

    fn bexpr(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.bterm()?;
        while self.eat(Tok::OrOr) {
            let rhs = self.bterm()?;
            lhs = BoolExpr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn bterm(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.bfactor()?;
        while self.eat(Tok::AndAnd) {
            let rhs = self.bfactor()?;
            lhs = BoolExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    /// A leading `(` may open either a nested boolean expression or the
    /// integer left-hand side of a comparison; scan ahead at depth zero.
    fn paren_opens_comparison(&self) -> bool {
        let mut depth = 0usize;
        let mut i = self.pos;
        loop {
            match &self.toks[i].0 {
                Tok::LParen => depth += 1,
                Tok::RParen => {
                    if depth == 0 {
                        return false;
                    }
                    depth -= 1;
                    if depth == 0 {
                        // closed the opening paren: a comparison operator next
                        // means the parenthesis belonged to an integer expr
                        return matches!(
                            self.toks[i + 1].0,
                            Tok::EqEq | Tok::NotEq | Tok::Le | Tok::Ge | Tok::Lt | Tok::Gt
                                | Tok::Plus | Tok::Minus | Tok::Star
                        );
                    }
                }
                // any boolean-level token before the paren closes means the
                // paren groups a boolean expression
                Tok::EqEq | Tok::NotEq | Tok::Le | Tok::Ge | Tok::Lt | Tok::Gt | Tok::AndAnd
                | Tok::OrOr | Tok::Bang | Tok::KwTrue | Tok::KwFalse
                    if depth >= 1 =>
                {
                    return false;
                }
                Tok::Eof => return false,
                _ => {}
            }
            i += 1;
        }
    }

    fn bfactor(&mut self) -> Result<BoolExpr, ParseError> {
        match self.cur().0.clone() {
            Tok::KwTrue => {
                self.advance();
                Ok(BoolExpr::True)
            }
            Tok::KwFalse => {
                self.advance();
                Ok(BoolExpr::False)
            }
            Tok::Bang => {
                self.advance();
                Ok(BoolExpr::not(self.bfactor()?))
            }
            Tok::LParen if !self.paren_opens_comparison() => {
                self.advance();
                let inner = self.bexpr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => {
                let lhs = self.iexpr()?;
                let op = match self.cur().0 {
                    Tok::EqEq => CmpOp::Eq,
                    Tok::NotEq => CmpOp::Ne,
                    Tok::Le => CmpOp::Le,
                    Tok::Ge => CmpOp::Ge,
                    Tok::Lt => CmpOp::Lt,
                    Tok::Gt => CmpOp::Gt,
                    _ => return Err(self.err_here("a comparison operator")),
                };
                self.advance();
                let rhs = self.iexpr()?;
                Ok(BoolExpr::Cmp(op, lhs, rhs))
            }
        }
    }

    fn iexpr(&mut self) -> Result<IntExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.cur().0 {
                Tok::Plus => IntOp::Add,
                Tok::Minus => IntOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            lhs = IntExpr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<IntExpr, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat(Tok::Star) {
            let rhs = self.unary()?;
            lhs = IntExpr::bin(IntOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<IntExpr, ParseError> {
        match self.cur().0.clone() {
            Tok::Minus => {
                self.advance();
                if matches!(self.cur().0, Tok::Int(_)) {
                    Ok(IntExpr::Const(self.int_lit(true)?))
                } else {
                    Ok(IntExpr::Neg(Box::new(self.unary()?)))
                }
            }
            Tok::Int(_) => Ok(IntExpr::Const(self.int_lit(false)?)),
            Tok::Ident(name) => {
                let (_, line, col) = self.advance();
                self.check_declared(&name, line, col)?;
                Ok(IntExpr::Var(name))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.iexpr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.err_here("an integer expression")),
        }
    }
}

/// Parses a whole program. Branch-condition sites get locations `L1`, `L2`, ...
/// in pre-order of appearance.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(src).tokenize()?;
    let mut p = Parser { toks, pos: 0, next_loc: 0, decls: Vec::new(), loop_depth: 0 };
    let prog = p.program()?;
    if p.cur().0 != Tok::Eof {
        return Err(p.err_here("end of input"));
    }
    Ok(prog)
}

/// Parses a standalone boolean expression over the given declared variables.
pub fn parse_bexpr(src: &str, vars: &[String]) -> Result<BoolExpr, ParseError> {
    let toks = Lexer::new(src).tokenize()?;
    let mut p = Parser { toks, pos: 0, next_loc: 0, decls: vars.to_vec(), loop_depth: 0 };
    let e = p.bexpr()?;
    if p.cur().0 != Tok::Eof {
        return Err(p.err_here("end of input"));
    }
    Ok(e)
}
