//! A small recursive-descent parser and evaluator for polynomial coordinate
//! expressions, used to define custom diffeomorphism families in scenario
//! files. Supported: numeric literals, named variables (`x1..xn`, `p1..pn`),
//! `+ - * ^`, unary minus and parentheses.

use std::fmt;

use crate::error::{GeoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser {
            chars: text.chars().collect(),
            pos: 0,
            text,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }

    /// Evaluates with variables resolved by `lookup`.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Number(v) => *v,
            Expr::Var(name) => lookup(name).ok_or_else(|| {
                GeoError::InvalidInput(format!("unknown variable '{name}' in expression"))
            })?,
            Expr::Neg(e) => -e.eval(lookup)?,
            Expr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            Expr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            Expr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            Expr::Pow(a, n) => a.eval(lookup)?.powi(*n as i32),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
        }
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> GeoError {
        GeoError::InvalidInput(format!(
            "expression '{}': {msg} at offset {}",
            self.text, self.pos
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected integer exponent"));
            }
            let n: u32 = self.chars[start..self.pos]
                .iter()
                .collect::<String>()
                .parse()
                .map_err(|_| self.error("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_digit()
                        || matches!(self.chars[self.pos], '.' | 'e' | 'E')
                        || (matches!(self.chars[self.pos], '+' | '-')
                            && self.pos > start
                            && matches!(self.chars[self.pos - 1], 'e' | 'E')))
                {
                    self.pos += 1;
                }
                let lit: String = self.chars[start..self.pos].iter().collect();
                lit.parse()
                    .map(Expr::Number)
                    .map_err(|_| self.error("bad numeric literal"))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                Ok(Expr::Var(self.chars[start..self.pos].iter().collect()))
            }
            _ => Err(self.error("expected a value")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval2(text: &str, x1: f64, p1: f64) -> f64 {
        Expr::parse(text)
            .unwrap()
            .eval(&|name| match name {
                "x1" => Some(x1),
                "p1" => Some(p1),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval2("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(eval2("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(eval2("2 * x1^2 - p1", 3.0, 1.0), 17.0);
        assert_eq!(eval2("-x1 + 0.5 * p1 * x1", 2.0, 4.0), 2.0);
        assert_eq!(eval2("1e-2 + 2E3", 0.0, 0.0), 2000.01);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("x1 ^ y").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("3 4").is_err());
    }

    #[test]
    fn unknown_variables_error_at_eval() {
        let e = Expr::parse("q7 + 1").unwrap();
        assert!(e.eval(&|_| None).is_err());
    }
}
