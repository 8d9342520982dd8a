//! Arithmetic expressions over model parameters.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | identifier | '(' expr ')' | '-' factor
//! ```

use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::ParamSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Index into the owning [`ParamSpace`].
    Param(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Param(i) => u[*i],
            Expr::Neg(e) => -e.eval(u),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(u), r.eval(u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        }
    }

    /// Exact evaluation; literals are read as their shortest decimal form.
    /// Returns `None` on division by zero.
    pub fn eval_rational(&self, u: &[BigRational]) -> Option<BigRational> {
        Some(match self {
            Expr::Num(v) => decimal_to_rational(*v)?,
            Expr::Param(i) => u[*i].clone(),
            Expr::Neg(e) => -e.eval_rational(u)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval_rational(u)?;
                let b = r.eval_rational(u)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.is_zero() {
                            return None;
                        }
                        a / b
                    }
                }
            }
        })
    }

    /// Heuristic test for the zero polynomial/rational function: the
    /// expression vanishes at a handful of generic interior points.
    pub fn is_identically_zero(&self, dim: usize) -> bool {
        const PROBES: [f64; 4] = [0.317_2, 0.583_9, 0.149_3, 0.701_7];
        (0..PROBES.len()).all(|k| {
            let u: Vec<f64> = (0..dim).map(|j| PROBES[(k + j) % PROBES.len()]).collect();
            self.eval(&u) == 0.0
        })
    }

    pub fn display<'a>(&'a self, params: &'a ParamSpace) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, params }
    }
}

/// Converts a finite float to the rational number spelled by its shortest
/// round-trip decimal representation (so `0.1` becomes exactly `1/10`).
pub fn decimal_to_rational(v: f64) -> Option<BigRational> {
    if !v.is_finite() {
        return None;
    }
    let s = format!("{:e}", v);
    let (mant, exp) = s.split_once('e')?;
    let exp: i64 = exp.parse().ok()?;
    let neg = mant.starts_with('-');
    let mant = mant.trim_start_matches('-');
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: num_bigint::BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exp - frac_part.len() as i64;
    let ten = num_bigint::BigInt::from(10u32);
    let mut r = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    params: &'a ParamSpace,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Param(i) => f.write_str(&self.params.names()[*i]),
            Expr::Neg(e) => write!(f, "-{}", e.display(self.params)),
            Expr::Bin(op, l, r) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({} {sym} {})", l.display(self.params), r.display(self.params))
            }
        }
    }
}

pub fn parse_expr(text: &str, params: &ParamSpace) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        params,
    };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(p.err("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a ParamSpace,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                self.params
                    .index_of(name)
                    .map(Expr::Param)
                    .ok_or_else(|| Error::UndeclaredIdentifier(name.to_string()))
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            digits(self);
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Num)
            .ok_or(Error::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })
    }
}
