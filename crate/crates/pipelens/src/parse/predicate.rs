//! Recursive-descent parser for the predicate expression language.
//!
//! Grammar:
//! ```text
//! expr     := or_expr
//! or_expr  := and_expr ("or" and_expr)*
//! and_expr := unary ("and" unary)*
//! unary    := "not" unary | atom
//! atom     := ident cmp literal | ident "is" ["not"] "null" | "(" expr ")"
//! cmp      := "==" | "!=" | "<" | "<=" | ">" | ">="
//! ```
//! Literals are integers, floats, single-quoted strings (no escapes), `true`
//! and `false`. Precedence: not > and > or; `and`/`or` are left-associative.

use crate::ir::predicate::{CmpOp, Predicate};
use crate::ir::value::Value;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxError {
    /// Byte offset into the source where the unexpected token starts.
    pub position: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "at offset {}: expected {}, found {}",
            self.position,
            self.expected.join(" or "),
            self.found
        )
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    True,
    False,
    And,
    Or,
    Not,
    Is,
    Null,
    Cmp(CmpOp),
    LParen,
    RParen,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier \"{name}\""),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Float(v) => format!("float {v}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::True => "\"true\"".into(),
            Tok::False => "\"false\"".into(),
            Tok::And => "\"and\"".into(),
            Tok::Or => "\"or\"".into(),
            Tok::Not => "\"not\"".into(),
            Tok::Is => "\"is\"".into(),
            Tok::Null => "\"null\"".into(),
            Tok::Cmp(op) => format!("\"{}\"", op.symbol()),
            Tok::LParen => "\"(\"".into(),
            Tok::RParen => "\")\"".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn error(&self, position: usize, expected: Vec<&'static str>, found: String) -> SyntaxError {
        SyntaxError { position, expected, found }
    }

    /// Next token plus its starting byte offset.
    fn next(&mut self) -> Result<(usize, Tok), SyntaxError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((start, Tok::Eof));
        }
        let b = self.src[self.pos];
        match b {
            b'(' => {
                self.pos += 1;
                Ok((start, Tok::LParen))
            }
            b')' => {
                self.pos += 1;
                Ok((start, Tok::RParen))
            }
            b'=' | b'!' | b'<' | b'>' => self.lex_cmp(start),
            b'\'' => self.lex_string(start),
            b'-' | b'0'..=b'9' => self.lex_number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => Ok((start, self.lex_word())),
            other => Err(self.error(
                start,
                vec!["identifier", "literal", "\"(\""],
                format!("\"{}\"", other as char),
            )),
        }
    }

    fn lex_cmp(&mut self, start: usize) -> Result<(usize, Tok), SyntaxError> {
        let two: &[u8] = self.src.get(start..start + 2).unwrap_or(b"");
        let op = match self.src[start] {
            b'=' if two == b"==" => (2, CmpOp::Eq),
            b'!' if two == b"!=" => (2, CmpOp::Ne),
            b'<' if two == b"<=" => (2, CmpOp::Le),
            b'<' => (1, CmpOp::Lt),
            b'>' if two == b">=" => (2, CmpOp::Ge),
            b'>' => (1, CmpOp::Gt),
            other => {
                return Err(self.error(
                    start,
                    vec!["\"==\"", "\"!=\""],
                    format!("\"{}\"", other as char),
                ))
            }
        };
        self.pos += op.0;
        Ok((start, Tok::Cmp(op.1)))
    }

    fn lex_string(&mut self, start: usize) -> Result<(usize, Tok), SyntaxError> {
        self.pos += 1;
        let content_start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != b'\'' {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(self.error(start, vec!["closing \"'\""], "end of input".into()));
        }
        let content = std::str::from_utf8(&self.src[content_start..self.pos])
            .map_err(|_| self.error(start, vec!["valid UTF-8 string"], "invalid bytes".into()))?
            .to_string();
        self.pos += 1;
        Ok((start, Tok::Str(content)))
    }

    fn lex_number(&mut self, start: usize) -> Result<(usize, Tok), SyntaxError> {
        self.pos += 1;
        let mut is_float = false;
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b'0'..=b'9' => self.pos += 1,
                b'.' if !is_float => {
                    is_float = true;
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        if is_float {
            text.parse::<f64>()
                .map(|f| (start, Tok::Float(f)))
                .map_err(|_| self.error(start, vec!["float literal"], format!("\"{text}\"")))
        } else {
            text.parse::<i64>()
                .map(|i| (start, Tok::Int(i)))
                .map_err(|_| self.error(start, vec!["integer literal"], format!("\"{text}\"")))
        }
    }

    fn lex_word(&mut self) -> Tok {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii word");
        match word {
            "and" => Tok::And,
            "or" => Tok::Or,
            "not" => Tok::Not,
            "is" => Tok::Is,
            "null" => Tok::Null,
            "true" => Tok::True,
            "false" => Tok::False,
            _ => Tok::Ident(word.to_string()),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].1
    }

    fn pos(&self) -> usize {
        self.tokens[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.at].1.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        tok
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> SyntaxError {
        SyntaxError {
            position: self.pos(),
            expected,
            found: self.peek().describe(),
        }
    }

    fn or_expr(&mut self) -> Result<Predicate, SyntaxError> {
        let mut left = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let right = self.and_expr()?;
            left = Predicate::Or { left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Predicate, SyntaxError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let right = self.unary()?;
            left = Predicate::And { left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Predicate, SyntaxError> {
        if *self.peek() == Tok::Not {
            self.bump();
            let inner = self.unary()?;
            return Ok(Predicate::Not { inner: Box::new(inner) });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Predicate, SyntaxError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.or_expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected(vec!["\")\""]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(column) => {
                self.bump();
                match self.peek().clone() {
                    Tok::Cmp(op) => {
                        self.bump();
                        let literal = self.literal()?;
                        Ok(Predicate::Cmp { column, op, literal })
                    }
                    Tok::Is => {
                        self.bump();
                        let negated = if *self.peek() == Tok::Not {
                            self.bump();
                            true
                        } else {
                            false
                        };
                        if *self.peek() != Tok::Null {
                            return Err(self.unexpected(if negated {
                                vec!["\"null\""]
                            } else {
                                vec!["\"null\"", "\"not\""]
                            }));
                        }
                        self.bump();
                        let test = Predicate::IsNull { column };
                        Ok(if negated {
                            Predicate::Not { inner: Box::new(test) }
                        } else {
                            test
                        })
                    }
                    _ => Err(self.unexpected(vec!["comparison operator", "\"is\""])),
                }
            }
            _ => Err(self.unexpected(vec!["identifier", "\"(\"", "\"not\""])),
        }
    }

    fn literal(&mut self) -> Result<Value, SyntaxError> {
        let value = match self.peek() {
            Tok::Int(v) => Value::Int(*v),
            Tok::Float(v) => Value::Float(*v),
            Tok::Str(s) => Value::Text(s.clone()),
            Tok::True => Value::Bool(true),
            Tok::False => Value::Bool(false),
            _ => return Err(self.unexpected(vec!["literal"])),
        };
        self.bump();
        Ok(value)
    }
}

/// Parses a predicate expression.
pub fn parse_predicate(src: &str) -> Result<Predicate, SyntaxError> {
    let mut lexer = Lexer::new(src);
    let mut tokens = Vec::new();
    loop {
        let (pos, tok) = lexer.next()?;
        let done = tok == Tok::Eof;
        tokens.push((pos, tok));
        if done {
            break;
        }
    }
    let mut parser = Parser { tokens, at: 0 };
    let predicate = parser.or_expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected(vec!["\"and\"", "\"or\"", "end of input"]));
    }
    Ok(predicate)
}
