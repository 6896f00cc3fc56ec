//! Tokenizer for the lattice language.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    /// Lower-cased identifier.
    Ident(String),
    Num(f64),
    /// String literal with its case preserved.
    Str(String),
    Semi,
    Comma,
    Colon,
    Assign,
    Defer,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    At,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Eof => "end of input".into(),
            t => format!("'{}'", t.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::Defer => ":=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::At => "@",
            _ => "?",
        }
    }
}

/// A token with its 1-based line and column.
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$')
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, col: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        // whitespace and comments
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('!') => skip_line(&mut cur),
                Some('/') => {
                    let mut ahead = cur.chars.clone();
                    ahead.next();
                    match ahead.next() {
                        Some('/') => skip_line(&mut cur),
                        Some('*') => {
                            let (line, col) = (cur.line, cur.col);
                            cur.bump();
                            cur.bump();
                            let mut prev = ' ';
                            loop {
                                match cur.bump() {
                                    None => return Err(cur.err(line, col, "unterminated comment")),
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                }
                            }
                        }
                        _ => break,
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (cur.line, cur.col);
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, line, col });
            return Ok(out);
        };
        let tok = if is_ident_start(c) {
            let mut s = String::new();
            while let Some(c) = cur.peek().filter(|&c| is_ident_char(c)) {
                s.push(c.to_ascii_lowercase());
                cur.bump();
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() || c == '.' {
            Tok::Num(number(&mut cur, line, col)?)
        } else if c == '"' || c == '\'' {
            cur.bump();
            let mut s = String::new();
            loop {
                match cur.bump() {
                    None | Some('\n') => return Err(cur.err(line, col, "unterminated string")),
                    Some(q) if q == c => break,
                    Some(ch) => s.push(ch),
                }
            }
            Tok::Str(s)
        } else {
            cur.bump();
            match c {
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                ':' => {
                    if cur.peek() == Some('=') {
                        cur.bump();
                        Tok::Defer
                    } else {
                        Tok::Colon
                    }
                }
                '=' => Tok::Assign,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '@' => Tok::At,
                other => return Err(cur.err(line, col, format!("unexpected character '{other}'"))),
            }
        };
        out.push(Token { tok, line, col });
    }
}

fn skip_line(cur: &mut Cursor) {
    while let Some(c) = cur.bump() {
        if c == '\n' {
            break;
        }
    }
}

fn number(cur: &mut Cursor, line: usize, col: usize) -> Result<f64> {
    let mut s = String::new();
    let digits = |cur: &mut Cursor, s: &mut String| {
        while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
            s.push(c);
            cur.bump();
        }
    };
    digits(cur, &mut s);
    if cur.peek() == Some('.') {
        s.push('.');
        cur.bump();
        digits(cur, &mut s);
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        // only an exponent when digits follow, possibly after a sign
        let mut ahead = cur.chars.clone();
        ahead.next();
        let mut n = ahead.next();
        if matches!(n, Some('+' | '-')) {
            n = ahead.next();
        }
        if n.is_some_and(|c| c.is_ascii_digit()) {
            s.push('e');
            cur.bump();
            if let Some(sign @ ('+' | '-')) = cur.peek() {
                s.push(sign);
                cur.bump();
            }
            digits(cur, &mut s);
        }
    }
    s.parse::<f64>()
        .map_err(|_| cur.err(line, col, format!("malformed number '{s}'")))
}
