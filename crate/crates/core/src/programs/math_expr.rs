//! Arithmetic expressions over `+ - * /` with parentheses, and their
//! conversion into step programs.

use super::program::{Arg, Op, Program, Step};
use super::ParseError;
use crate::numeric::format_number;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(&self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn program_op(&self) -> Op {
        match self {
            BinOp::Add => Op::Add,
            BinOp::Sub => Op::Subtract,
            BinOp::Mul => Op::Multiply,
            BinOp::Div => Op::Divide,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MathExpr {
    Num(f64),
    /// Negation of a parenthesized expression; negative literals fold into `Num`.
    Neg(Box<MathExpr>),
    Bin(BinOp, Box<MathExpr>, Box<MathExpr>),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MathError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

impl MathExpr {
    pub fn bin(op: BinOp, left: MathExpr, right: MathExpr) -> Self {
        MathExpr::Bin(op, Box::new(left), Box::new(right))
    }

    fn precedence(&self) -> u8 {
        match self {
            MathExpr::Bin(op, ..) => op.precedence(),
            MathExpr::Num(_) | MathExpr::Neg(_) => 3,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            MathExpr::Num(_) => 0,
            MathExpr::Neg(e) => 1 + e.depth(),
            MathExpr::Bin(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }
}

impl fmt::Display for MathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathExpr::Num(v) => f.write_str(&format_number(*v)),
            MathExpr::Neg(inner) => write!(f, "-({inner})"),
            MathExpr::Bin(op, left, right) => {
                if left.precedence() < op.precedence() {
                    write!(f, "({left})")?;
                } else {
                    write!(f, "{left}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if right.precedence() <= op.precedence() {
                    write!(f, "({right})")
                } else {
                    write!(f, "{right}")
                }
            }
        }
    }
}

/// Parses with the usual precedence and left associativity. Literals may
/// carry `$` and thousands commas; `x%` means `x / 100`.
pub fn parse_math_expr(text: &str) -> Result<MathExpr, ParseError> {
    let mut parser = Parser { src: text, pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != text.len() {
        return Err(ParseError::new(parser.pos, "unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self, c: char) {
        self.pos += c.len_utf8();
    }

    fn expr(&mut self) -> Result<MathExpr, ParseError> {
        let mut left = self.term()?;
        loop {
            let (op, c) = match self.peek() {
                Some('+') => (BinOp::Add, '+'),
                Some(c @ ('-' | '−')) => (BinOp::Sub, c),
                _ => return Ok(left),
            };
            self.bump(c);
            left = MathExpr::bin(op, left, self.term()?);
        }
    }

    fn term(&mut self) -> Result<MathExpr, ParseError> {
        let mut left = self.unary()?;
        loop {
            let (op, c) = match self.peek() {
                Some(c @ ('*' | '×')) => (BinOp::Mul, c),
                Some(c @ ('/' | '÷')) => (BinOp::Div, c),
                _ => return Ok(left),
            };
            self.bump(c);
            let operand_at = {
                self.skip_ws();
                self.pos
            };
            let right = self.unary()?;
            if op == BinOp::Div && right == MathExpr::Num(0.0) {
                return Err(ParseError::new(operand_at, "division by zero"));
            }
            left = MathExpr::bin(op, left, right);
        }
    }

    fn unary(&mut self) -> Result<MathExpr, ParseError> {
        match self.peek() {
            Some(c @ ('-' | '−')) => {
                self.bump(c);
                Ok(match self.unary()? {
                    MathExpr::Num(v) => MathExpr::Num(-v),
                    other => MathExpr::Neg(Box::new(other)),
                })
            }
            Some('(') => {
                self.bump('(');
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(ParseError::new(self.pos, "expected ')'"));
                }
                self.bump(')');
                Ok(inner)
            }
            Some(c) if c == '$' || c == '.' || c.is_ascii_digit() => self.number(),
            Some(_) => Err(ParseError::new(self.pos, "expected number or '('")),
            None => Err(ParseError::new(self.pos, "unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<MathExpr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        if bytes[end] == b'$' {
            end += 1;
        }
        let mut literal = String::new();
        let mut seen_dot = false;
        while end < bytes.len() {
            match bytes[end] {
                b'0'..=b'9' => literal.push(bytes[end] as char),
                b'.' if !seen_dot => {
                    seen_dot = true;
                    literal.push('.');
                }
                // thousands separator only between digits
                b',' if !seen_dot
                    && literal.chars().last().is_some_and(|c| c.is_ascii_digit())
                    && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) => {}
                _ => break,
            }
            end += 1;
        }
        if !literal.chars().any(|c| c.is_ascii_digit()) {
            return Err(ParseError::new(start, "expected number"));
        }
        let mut value: f64 = literal.parse().map_err(|_| ParseError::new(start, "invalid number"))?;
        if bytes.get(end) == Some(&b'%') {
            end += 1;
            value /= 100.0;
        }
        self.pos = end;
        Ok(MathExpr::Num(value))
    }
}

pub fn eval_math_expr(expr: &MathExpr) -> Result<f64, MathError> {
    let value = match expr {
        MathExpr::Num(v) => *v,
        MathExpr::Neg(inner) => -eval_math_expr(inner)?,
        MathExpr::Bin(op, left, right) => {
            let a = eval_math_expr(left)?;
            let b = eval_math_expr(right)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b == 0.0 => return Err(MathError::DivisionByZero),
                BinOp::Div => a / b,
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MathError::NonFinite)
    }
}

/// Post-order flattening: each operator node becomes one step, and operands
/// that are themselves operator nodes become step references. A bare literal
/// becomes `add(x, 0)`; a negation becomes `subtract(0, x)`.
pub fn expr_to_program(expr: &MathExpr) -> Program {
    let mut steps = Vec::new();
    if let MathExpr::Num(v) = expr {
        steps.push(Step { op: Op::Add, args: [Arg::Number(*v), Arg::Number(0.0)] });
    } else {
        emit(expr, &mut steps);
    }
    Program::new(steps).expect("post-order flattening only references earlier steps")
}

fn emit(expr: &MathExpr, steps: &mut Vec<Step>) -> Arg {
    let (op, args) = match expr {
        MathExpr::Num(v) => return Arg::Number(*v),
        MathExpr::Neg(inner) => (Op::Subtract, [Arg::Number(0.0), emit(inner, steps)]),
        MathExpr::Bin(op, left, right) => {
            let a = emit(left, steps);
            let b = emit(right, steps);
            (op.program_op(), [a, b])
        }
    };
    steps.push(Step { op, args });
    Arg::StepRef(steps.len() - 1)
}
