//! Recursive-descent parser producing [`Stmt`] lists.

use crate::error::{Error, Result};
use crate::lattice::{BinOp, Expr};

use super::ast::{Arg, Item, ItemTarget, Stmt, Val};
use super::lexer::{tokenize, Tok, Token};

/// A statement and the line it starts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Located {
    pub stmt: Stmt,
    pub line: usize,
}

pub fn parse(src: &str) -> Result<Vec<Stmt>> {
    Ok(parse_located(src)?.into_iter().map(|l| l.stmt).collect())
}

pub fn parse_located(src: &str) -> Result<Vec<Located>> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let mut out = Vec::new();
    while p.peek() != &Tok::Eof {
        let line = p.cur().line;
        let stmt = p.statement(false)?;
        out.push(Located { stmt, line });
    }
    Ok(out)
}

/// Parses a lone expression, e.g. from a command-line flag.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    p.expect(&Tok::Eof, "after the expression")?;
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn cur(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek(&self) -> &Tok {
        &self.cur().tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let t = self.cur();
        Error::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        }
    }

    fn expected(&self, what: &str) -> Error {
        let found = self.peek().describe();
        if self.peek() == &Tok::Eof && what.starts_with("';'") {
            return self.error(format!("unterminated statement: expected {what}, found {found}"));
        }
        self.error(format!("expected {what}, found {found}"))
    }

    fn expect(&mut self, t: &Tok, ctx: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            let what = match t {
                Tok::Eof => "end of input".to_string(),
                t => format!("{} {ctx}", t.describe()),
            };
            Err(self.expected(what.trim_end()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.expected(what)),
        }
    }

    fn end(&mut self) -> Result<()> {
        self.expect(&Tok::Semi, "to end the statement")
    }

    fn statement(&mut self, in_sequence: bool) -> Result<Stmt> {
        let name = self.ident("a statement")?;
        match self.peek().clone() {
            Tok::Assign | Tok::Defer if !in_sequence => {
                let deferred = self.advance() == Tok::Defer;
                let expr = self.expr()?;
                self.end()?;
                Ok(Stmt::Assign { name, deferred, expr })
            }
            Tok::Colon => {
                self.advance();
                let class = self.ident("an element class, 'line' or 'sequence'")?;
                if class == "line" && self.peek() == &Tok::Assign {
                    self.advance();
                    self.expect(&Tok::LParen, "to open the line")?;
                    let items = self.line_items()?;
                    self.end()?;
                    return Ok(Stmt::Line { name, items });
                }
                let args = self.tail_args()?;
                // a sequence built from a line has no body
                let from_line = args.iter().any(|a| a.name.as_deref() == Some("line"));
                if class == "sequence" {
                    if in_sequence {
                        return Err(self.error("sequences cannot be nested"));
                    }
                    if from_line {
                        return Ok(Stmt::Sequence { name, args, body: Vec::new() });
                    }
                    let mut body = Vec::new();
                    loop {
                        if self.peek() == &Tok::Ident("endsequence".into()) {
                            self.advance();
                            self.end()?;
                            break;
                        }
                        if self.peek() == &Tok::Eof {
                            return Err(self.expected("'endsequence'"));
                        }
                        body.push(self.statement(true)?);
                    }
                    return Ok(Stmt::Sequence { name, args, body });
                }
                Ok(Stmt::Define { name, class, args })
            }
            Tok::LParen => {
                self.advance();
                let args = if self.peek() == &Tok::RParen { Vec::new() } else { self.args()? };
                self.expect(&Tok::RParen, "to close the argument list")?;
                self.end()?;
                Ok(Stmt::Command { name, args })
            }
            Tok::Comma | Tok::Semi => {
                let args = self.tail_args()?;
                Ok(Stmt::Command { name, args })
            }
            _ => Err(self.expected(if in_sequence {
                "',', ':' or ';'"
            } else {
                "'=', ':=', ':', ',' or ';'"
            })),
        }
    }

    /// `[, arg]* ;`
    fn tail_args(&mut self) -> Result<Vec<Arg>> {
        let args = if self.eat(&Tok::Comma) { self.args()? } else { Vec::new() };
        self.end()?;
        Ok(args)
    }

    fn args(&mut self) -> Result<Vec<Arg>> {
        let mut out = vec![self.arg()?];
        while self.eat(&Tok::Comma) {
            out.push(self.arg()?);
        }
        Ok(out)
    }

    fn arg(&mut self) -> Result<Arg> {
        if let Tok::Ident(n) = self.peek().clone() {
            if matches!(self.peek_at(1), Tok::Assign | Tok::Defer) {
                self.advance();
                let deferred = self.advance() == Tok::Defer;
                let val = self.val()?;
                return Ok(Arg {
                    name: Some(n),
                    deferred,
                    val,
                });
            }
        }
        Ok(Arg {
            name: None,
            deferred: false,
            val: self.val()?,
        })
    }

    fn val(&mut self) -> Result<Val> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(Val::Str(s))
            }
            Tok::LBrace => {
                self.advance();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        items.push(self.val()?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        if !self.eat(&Tok::Comma) {
                            return Err(self.expected("',' or '}'"));
                        }
                    }
                }
                Ok(Val::List(items))
            }
            _ => Ok(Val::Expr(self.expr()?)),
        }
    }

    fn line_items(&mut self) -> Result<Vec<Item>> {
        let mut items = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(items);
        }
        loop {
            items.push(self.line_item()?);
            if self.eat(&Tok::RParen) {
                return Ok(items);
            }
            if !self.eat(&Tok::Comma) {
                return Err(self.expected("',' or ')' in the line"));
            }
        }
    }

    fn line_item(&mut self) -> Result<Item> {
        // leading `factor*` pairs form the repetition count
        let mut times: Option<Expr> = None;
        loop {
            let factor = match self.peek().clone() {
                Tok::Num(n) => Expr::Num(n),
                Tok::Ident(n) if self.peek_at(1) == &Tok::Star => Expr::Var(n),
                _ => break,
            };
            self.advance();
            self.expect(&Tok::Star, "after the repetition count")?;
            times = Some(match times {
                None => factor,
                Some(t) => Expr::bin(BinOp::Mul, t, factor),
            });
        }
        let target = match self.peek().clone() {
            Tok::Ident(n) => {
                self.advance();
                ItemTarget::Name(n)
            }
            Tok::LParen => {
                self.advance();
                ItemTarget::Group(self.line_items()?)
            }
            Tok::Minus => return Err(self.error("reflected lines are not supported")),
            _ => return Err(self.expected("an element, a line or '('")),
        };
        let at = if self.eat(&Tok::At) { Some(self.expr()?) } else { None };
        Ok(Item {
            target,
            times: times.unwrap_or(Expr::Num(1.0)),
            at,
        })
    }

    pub fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::bin(op, e, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(e),
            };
            self.advance();
            e = Expr::bin(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            return Ok(Expr::bin(BinOp::Pow, base, self.unary()?));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.advance();
                Ok(Expr::Num(v))
            }
            Tok::Ident(n) => {
                self.advance();
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            if !self.eat(&Tok::Comma) {
                                return Err(self.expected("',' or ')' in the call"));
                            }
                        }
                    }
                    return Ok(Expr::Call(n, args));
                }
                Ok(Expr::Var(n))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&Tok::RParen, "to close the parenthesis")?;
                Ok(e)
            }
            _ => Err(self.expected("an expression")),
        }
    }
}
