//! Arithmetic expression evaluator used by the `calculate` tool.
//!
//! Grammar (standard precedence, binary operators left-associative):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | "(" expr ")"
//! number  := digits ["." digits] | "." digits
//! ```

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalcError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("division by zero")]
    DivZero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(f64),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn lex(input: &str) -> Result<Vec<(usize, Token)>, CalcError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let frac_start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i == frac_start {
                        return Err(CalcError::Parse(format!("malformed number at position {start}")));
                    }
                }
                let text = &input[start..i];
                if text.starts_with('.') && text.len() == 1 {
                    return Err(CalcError::Parse(format!("malformed number at position {start}")));
                }
                let value: f64 = text
                    .parse()
                    .map_err(|_| CalcError::Parse(format!("malformed number at position {start}")))?;
                out.push((start, Token::Num(value)));
                continue;
            }
            _ => {
                let ch = input[i..].chars().next().unwrap_or('?');
                return Err(CalcError::Parse(format!("unexpected character '{ch}' at position {i}")));
            }
        };
        out.push((i, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).map(|(_, t)| *t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<f64, CalcError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<f64, CalcError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    acc *= self.unary()?;
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    if rhs == 0.0 {
                        return Err(CalcError::DivZero);
                    }
                    acc /= rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<f64, CalcError> {
        if self.peek() == Some(Token::Minus) {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<f64, CalcError> {
        let at = self.here();
        match self.peek() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(v)
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(Token::RParen) {
                    return Err(CalcError::Parse(format!("expected ')' at position {}", self.here())));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(_) => Err(CalcError::Parse(format!("unexpected operator at position {at}"))),
            None => Err(CalcError::Parse("unexpected end of expression".into())),
        }
    }
}

/// Evaluates an arithmetic expression over decimal literals.
pub fn eval_expression(expr: &str) -> Result<f64, CalcError> {
    let tokens = lex(expr)?;
    if tokens.is_empty() {
        return Err(CalcError::Parse("empty expression".into()));
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end: expr.len(),
    };
    let value = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(CalcError::Parse(format!("unexpected token at position {}", p.here())));
    }
    if !value.is_finite() {
        return Err(CalcError::Parse("result is not a finite number".into()));
    }
    Ok(value)
}
