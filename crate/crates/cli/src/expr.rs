//! Tiny arithmetic reader for expectation values such as `-8sqrt(pi)`.
//!
//! Grammar: sums and differences of products; factors are numbers, `pi`, `e`,
//! `sqrt(..)` or parenthesized expressions. Juxtaposition multiplies.

use crate::error::{CliError, CliResult};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Option<u8> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> CliError {
        CliError::Config(format!("cannot read expression at byte {}: {msg}", self.pos))
    }

    fn expr(&mut self) -> CliResult<f64> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                b'-' => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> CliResult<f64> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc *= self.unary()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc /= self.unary()?;
                }
                Some(c) if c == b'(' || c.is_ascii_alphabetic() => acc *= self.unary()?,
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> CliResult<f64> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> CliResult<f64> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    let exp_sign = (c == b'-' || c == b'+') && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        // `e` directly followed by a non-digit is the constant, not an exponent
                        if (c == b'e' || c == b'E')
                            && !self
                                .src
                                .get(self.pos + 1)
                                .is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+')
                        {
                            break;
                        }
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                text.parse::<f64>().map_err(|_| self.err(&format!("bad number '{text}'")))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                    self.pos += 1;
                }
                match &self.src[start..self.pos] {
                    b"pi" => Ok(std::f64::consts::PI),
                    b"e" => Ok(std::f64::consts::E),
                    b"sqrt" => {
                        if self.peek() != Some(b'(') {
                            return Err(self.err("sqrt needs parentheses"));
                        }
                        let v = self.atom()?;
                        if v < 0.0 {
                            return Err(self.err("sqrt of a negative value"));
                        }
                        Ok(v.sqrt())
                    }
                    other => Err(self.err(&format!("unknown name '{}'", String::from_utf8_lossy(other)))),
                }
            }
            _ => Err(self.err("unexpected end or symbol")),
        }
    }
}

pub fn eval(text: &str) -> CliResult<f64> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let v = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(v)
}
