//! Recursive-descent parser for the symbol DSL.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | name | name '(' expr ')' | '(' expr ')'
//! ```

use super::node::{self, Func, Node, NodeRef, Var};
use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut exp = end + 1;
                if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                    exp += 1;
                }
                if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                    while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        exp += 1;
                    }
                    end = exp;
                }
            }
            let text = &self.src[self.pos..end];
            let v: f64 = text
                .parse()
                .map_err(|_| ParseError::Syntax { pos: start, msg: format!("malformed number '{text}'") })?;
            self.pos = end;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            let ident = self.src[self.pos..end].to_string();
            self.pos = end;
            return Ok((Tok::Ident(ident), start));
        }
        Err(ParseError::Syntax { pos: start, msg: format!("unexpected character '{}'", c as char) })
    }
}

pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str, dim: usize) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, pos) = lexer.next()?;
        Ok(Parser { lexer, tok, pos, dim })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, pos) = self.lexer.next()?;
        self.tok = tok;
        self.pos = pos;
        Ok(())
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { pos: self.pos, msg: msg.into() })
    }

    pub fn parse_all(mut self) -> Result<NodeRef, ParseError> {
        if self.tok == Tok::End {
            return self.error("empty expression");
        }
        let e = self.expr()?;
        match self.tok {
            Tok::End => Ok(e),
            Tok::RParen => self.error("unbalanced ')'"),
            _ => self.error("expected an operator (juxtaposition is not multiplication)"),
        }
    }

    fn expr(&mut self) -> Result<NodeRef, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.bump()?;
                    lhs = std::sync::Arc::new(Node::Add(lhs, self.term()?));
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = std::sync::Arc::new(Node::Sub(lhs, self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<NodeRef, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.bump()?;
                    lhs = std::sync::Arc::new(Node::Mul(lhs, self.unary()?));
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = std::sync::Arc::new(Node::Div(lhs, self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<NodeRef, ParseError> {
        if self.tok == Tok::Minus {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(std::sync::Arc::new(Node::Neg(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<NodeRef, ParseError> {
        let base = self.primary()?;
        if self.tok == Tok::Caret {
            self.bump()?;
            let exp = self.unary()?;
            return Ok(std::sync::Arc::new(Node::Pow(base, exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<NodeRef, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(node::constant(v))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::RParen {
                    return self.error("expected ')'");
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.pos;
                self.bump()?;
                if let Some(f) = Func::from_name(&name) {
                    if self.tok != Tok::LParen {
                        return self.error(format!("function '{name}' requires parenthesised argument"));
                    }
                    self.bump()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::RParen {
                        return self.error("expected ')'");
                    }
                    self.bump()?;
                    return Ok(std::sync::Arc::new(Node::Call(f, arg)));
                }
                self.variable(&name, at)
            }
            Tok::End => self.error("unexpected end of input"),
            other => self.error(format!("unexpected token {other:?}")),
        }
    }

    fn variable(&self, name: &str, at: usize) -> Result<NodeRef, ParseError> {
        let leaf = match name {
            "pi" => return Ok(node::constant(std::f64::consts::PI)),
            "t" => Node::Var(Var::T),
            "norm_xi" => Node::NormXi,
            "jnorm_xi" => Node::JnormXi,
            _ => {
                let (var, digits) = if let Some(d) = name.strip_prefix("xi") {
                    (Var::Xi as fn(usize) -> Var, d)
                } else if let Some(d) = name.strip_prefix('x') {
                    (Var::X as fn(usize) -> Var, d)
                } else {
                    return Err(ParseError::Syntax { pos: at, msg: format!("unknown identifier '{name}'") });
                };
                let index: usize = match digits.parse() {
                    Ok(i) if i >= 1 && !digits.starts_with('0') => i,
                    _ => return Err(ParseError::Syntax { pos: at, msg: format!("unknown identifier '{name}'") }),
                };
                if index > self.dim {
                    return Err(ParseError::Dimension { name: name.to_string(), dim: self.dim });
                }
                Node::Var(var(index - 1))
            }
        };
        Ok(std::sync::Arc::new(leaf))
    }
}
