//! Numerical-reasoning programs: `op(arg, arg), op(arg, #k), ...`.

use super::ParseError;
use crate::numeric::format_number;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Subtract,
    Multiply,
    Divide,
    Exp,
    Greater,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Add, Op::Subtract, Op::Multiply, Op::Divide, Op::Exp, Op::Greater];

    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Subtract => "subtract",
            Op::Multiply => "multiply",
            Op::Divide => "divide",
            Op::Exp => "exp",
            Op::Greater => "greater",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arg {
    Number(f64),
    /// Result of an earlier step.
    StepRef(usize),
    /// `const_N` literal; behaves like a number.
    Const(f64),
}

impl Arg {
    fn same_as(&self, other: &Arg, tol: f64) -> bool {
        match (self, other) {
            (Arg::Number(a), Arg::Number(b)) | (Arg::Const(a), Arg::Const(b)) => close(*a, *b, tol),
            (Arg::StepRef(a), Arg::StepRef(b)) => a == b,
            _ => false,
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Number(v) => f.write_str(&format_number(*v)),
            Arg::StepRef(k) => write!(f, "#{k}"),
            Arg::Const(v) if *v < 0.0 => write!(f, "const_m{}", format_number(-v)),
            Arg::Const(v) => write!(f, "const_{}", format_number(*v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub op: Op,
    pub args: [Arg; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    steps: Vec<Step>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProgramError {
    #[error("program has no steps")]
    Empty,
    #[error("forward reference at step {step}")]
    ForwardRef { step: usize },
    #[error("division by zero at step {step}")]
    DivisionByZero { step: usize },
    #[error("greater result used as numeric arg at step {step}")]
    BoolAsNumber { step: usize },
    #[error("greater must be the final step (found at step {step})")]
    GreaterNotFinal { step: usize },
    #[error("non-finite result at step {step}")]
    NonFinite { step: usize },
}

/// Value of an executed program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProgramValue {
    Number(f64),
    Bool(bool),
}

impl ProgramValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ProgramValue::Number(v) => Some(*v),
            ProgramValue::Bool(_) => None,
        }
    }
}

impl fmt::Display for ProgramValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramValue::Number(v) => f.write_str(&format_number(*v)),
            ProgramValue::Bool(true) => f.write_str("yes"),
            ProgramValue::Bool(false) => f.write_str("no"),
        }
    }
}

impl Program {
    pub fn new(steps: Vec<Step>) -> Result<Self, ProgramError> {
        if steps.is_empty() {
            return Err(ProgramError::Empty);
        }
        for (i, step) in steps.iter().enumerate() {
            if step.args.iter().any(|a| matches!(a, Arg::StepRef(k) if *k >= i)) {
                return Err(ProgramError::ForwardRef { step: i });
            }
        }
        Ok(Program { steps })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Structural equality with numeric arguments compared to a relative
    /// tolerance. No commutative matching.
    pub fn same_structure(&self, other: &Program, tol: f64) -> bool {
        self.steps.len() == other.steps.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.op == b.op && a.args[0].same_as(&b.args[0], tol) && a.args[1].same_as(&b.args[1], tol))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}({}, {})", step.op.name(), step.args[0], step.args[1])?;
        }
        Ok(())
    }
}

/// Parses `step ("," step)*`. Arguments may also be nested steps, which are
/// flattened into earlier steps and referenced by index.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser { src: text, pos: 0, steps: Vec::new() };
    parser.skip_ws();
    parser.step()?;
    loop {
        parser.skip_ws();
        if parser.pos == text.len() {
            break;
        }
        if !parser.eat(',') {
            return Err(ParseError::new(parser.pos, "unexpected trailing input"));
        }
        parser.skip_ws();
        parser.step()?;
    }
    Ok(Program { steps: parser.steps })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    steps: Vec<Step>,
}

enum RawArg {
    Value(Arg),
    Ref { index: usize, offset: usize },
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> &str {
        let start = self.pos;
        let len = self.rest().find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(self.rest().len());
        self.pos += len;
        &self.src[start..self.pos]
    }

    /// Parses one call and returns its flattened step index.
    fn step(&mut self) -> Result<usize, ParseError> {
        let start = self.pos;
        let name = self.word();
        if name.is_empty() {
            return Err(ParseError::new(start, "expected operation name"));
        }
        let op = Op::from_name(name).ok_or_else(|| ParseError::new(start, format!("unknown operation {name:?}")))?;
        self.skip_ws();
        if !self.eat('(') {
            return Err(ParseError::new(self.pos, "expected '('"));
        }
        let mut args = Vec::new();
        self.skip_ws();
        if !self.eat(')') {
            loop {
                self.skip_ws();
                args.push(self.arg()?);
                self.skip_ws();
                if self.eat(')') {
                    break;
                }
                if !self.eat(',') {
                    return Err(ParseError::new(self.pos, "expected ',' or ')'"));
                }
            }
        }
        if args.len() != 2 {
            return Err(ParseError::new(start, format!("expected 2 arguments, found {}", args.len())));
        }
        let index = self.steps.len();
        let mut resolved = [Arg::Number(0.0); 2];
        for (slot, raw) in resolved.iter_mut().zip(args) {
            *slot = match raw {
                RawArg::Value(arg) => arg,
                RawArg::Ref { index: k, offset } => {
                    if k >= index {
                        return Err(ParseError::new(offset, format!("forward reference at step {index}")));
                    }
                    Arg::StepRef(k)
                }
            };
        }
        self.steps.push(Step { op, args: resolved });
        Ok(index)
    }

    fn arg(&mut self) -> Result<RawArg, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some('#') => {
                self.pos += 1;
                let digits = self.word();
                let index =
                    digits.parse::<usize>().map_err(|_| ParseError::new(start, "expected step index after '#'"))?;
                Ok(RawArg::Ref { index, offset: start })
            }
            Some(c) if c.is_ascii_alphabetic() => {
                if let Some(rest) = self.rest().strip_prefix("const_") {
                    let (negative, skip) = match rest.strip_prefix('m') {
                        Some(_) => (true, 7),
                        None => (false, 6),
                    };
                    self.pos += skip;
                    let value = self.number()?;
                    return Ok(RawArg::Value(Arg::Const(if negative { -value } else { value })));
                }
                let index = self.step()?;
                Ok(RawArg::Value(Arg::StepRef(index)))
            }
            _ => Ok(RawArg::Value(Arg::Number(self.number()?))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        if end < bytes.len() && matches!(bytes[end], b'-' | b'+') {
            end += 1;
        }
        let digits_start = end;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        let literal = &self.src[start..end];
        let body = &self.src[digits_start..end];
        if !body.bytes().any(|b| b.is_ascii_digit()) || body.matches('.').count() > 1 {
            return Err(ParseError::new(start, "expected number"));
        }
        let mut value: f64 = literal.parse().map_err(|_| ParseError::new(start, "invalid number"))?;
        if end < bytes.len() && bytes[end] == b'%' {
            end += 1;
            value /= 100.0;
        }
        self.pos = end;
        Ok(value)
    }
}

/// Runs the steps in order; the last step's value is the result.
pub fn eval_program(program: &Program) -> Result<ProgramValue, ProgramError> {
    let last = program.steps.len() - 1;
    let mut values: Vec<ProgramValue> = Vec::with_capacity(program.steps.len());
    for (i, step) in program.steps.iter().enumerate() {
        let mut operands = [0.0; 2];
        for (slot, arg) in operands.iter_mut().zip(&step.args) {
            *slot = match arg {
                Arg::Number(v) | Arg::Const(v) => *v,
                Arg::StepRef(k) => values[*k].as_number().ok_or(ProgramError::BoolAsNumber { step: i })?,
            };
        }
        let [a, b] = operands;
        let value = match step.op {
            Op::Add => a + b,
            Op::Subtract => a - b,
            Op::Multiply => a * b,
            Op::Divide if b == 0.0 => return Err(ProgramError::DivisionByZero { step: i }),
            Op::Divide => a / b,
            Op::Exp => a.powf(b),
            Op::Greater if i != last => return Err(ProgramError::GreaterNotFinal { step: i }),
            Op::Greater => {
                values.push(ProgramValue::Bool(a > b));
                continue;
            }
        };
        if !value.is_finite() {
            return Err(ProgramError::NonFinite { step: i });
        }
        values.push(ProgramValue::Number(value));
    }
    Ok(values[last])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str) -> ProgramValue {
        eval_program(&parse_program(text).unwrap()).unwrap()
    }

    #[test]
    fn single_step() {
        let p = parse_program("subtract(5, 3)").unwrap();
        assert_eq!(p.steps().len(), 1);
        assert_eq!(eval_program(&p).unwrap(), ProgramValue::Number(2.0));
    }

    #[test]
    fn back_reference() {
        let p = parse_program("add(2, 3), add(1, #0)").unwrap();
        assert_eq!(p.steps().len(), 2);
        assert_eq!(p.steps()[1].args[1], Arg::StepRef(0));
        assert_eq!(eval_program(&p).unwrap(), ProgramValue::Number(6.0));
    }

    #[test]
    fn forward_reference_rejected() {
        let err = parse_program("add(1, #1)").unwrap_err();
        assert_eq!(err.message, "forward reference at step 0");
        assert_eq!(err.offset, 7);
    }

    #[test]
    fn nested_calls_flatten() {
        let p = parse_program("divide(subtract(206588, 181001), 181001)").unwrap();
        assert_eq!(p.to_string(), "subtract(206588, 181001), divide(#0, 181001)");
        let ProgramValue::Number(v) = eval_program(&p).unwrap() else { panic!() };
        // 25587 / 181001 evaluated independently
        assert!((v - 0.141_363_859_868_177_5).abs() < 1e-9);
    }

    #[test]
    fn greater_yields_yes_no() {
        assert_eq!(eval("greater(5, 3)").to_string(), "yes");
        assert_eq!(eval("greater(2, 3)").to_string(), "no");
    }

    #[test]
    fn greater_must_be_last() {
        let p = parse_program("greater(5, 3), add(#0, 1)").unwrap();
        assert_eq!(eval_program(&p), Err(ProgramError::GreaterNotFinal { step: 0 }));
    }

    #[test]
    fn division_by_zero() {
        let p = parse_program("subtract(3, 3), divide(1, #0)").unwrap();
        assert_eq!(eval_program(&p), Err(ProgramError::DivisionByZero { step: 1 }));
    }

    #[test]
    fn exp_is_power() {
        assert_eq!(eval("exp(2, 10)"), ProgramValue::Number(1024.0));
    }

    #[test]
    fn const_args() {
        let p = parse_program("multiply(const_100, const_m1)").unwrap();
        assert_eq!(p.steps()[0].args, [Arg::Const(100.0), Arg::Const(-1.0)]);
        assert_eq!(p.to_string(), "multiply(const_100, const_m1)");
        assert_eq!(eval_program(&p).unwrap(), ProgramValue::Number(-100.0));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let cases = [
            ("foo(1, 2)", 0, "unknown operation"),
            ("add(1)", 0, "expected 2 arguments, found 1"),
            ("add(1, 2, 3)", 0, "expected 2 arguments, found 3"),
            ("add(1, 2) x", 10, "unexpected trailing input"),
            ("add(1, x)", 7, "unknown operation"),
            ("", 0, "expected operation name"),
        ];
        for (text, offset, msg) in cases {
            let err = parse_program(text).unwrap_err();
            assert_eq!(err.offset, offset, "{text}");
            assert!(err.message.starts_with(msg), "{text}: {}", err.message);
        }
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_program("add( 1 , 2 ),multiply(#0,4)").unwrap();
        let b = parse_program("add(1, 2), multiply(#0, 4)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percent_literal() {
        assert_eq!(eval("multiply(50%, 30)"), ProgramValue::Number(15.0));
    }
}
