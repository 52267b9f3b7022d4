//! Parsers and executors for the three derivation formats.
//!
//! Canonical printed forms (each type's `Display`) are the strings stored in
//! `answer.derivation`.

pub mod math_expr;
pub mod program;
pub mod sql;

pub use math_expr::{eval_math_expr, expr_to_program, parse_math_expr, BinOp, MathError, MathExpr};
pub use program::{eval_program, parse_program, Arg, Op, Program, ProgramError, ProgramValue, Step};
pub use sql::{exec_sql, parse_sql, run_sql, Aggregate, CmpOp, Condition, SqlError, SqlQuery, SqlStatement};

use crate::table::{AnswerFormat, UnifiedTable};
use std::fmt;

/// Syntax error with the character offset where parsing stopped.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} (offset {offset})")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError { offset, message: message.into() }
    }
}

/// A derivation parsed in whichever grammar accepts it.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivation {
    Program(Program),
    MathExpr(MathExpr),
    Sql(SqlStatement),
}

impl Derivation {
    /// Tries SQL for text starting with `SELECT`, otherwise the program
    /// grammar, then the math-expression grammar.
    pub fn parse(text: &str) -> Result<Derivation, ParseError> {
        let trimmed = text.trim();
        if trimmed.len() >= 6 && trimmed.is_char_boundary(6) && trimmed[..6].eq_ignore_ascii_case("select") {
            return parse_sql(trimmed).map(Derivation::Sql);
        }
        match parse_program(trimmed) {
            Ok(p) => Ok(Derivation::Program(p)),
            Err(program_err) => parse_math_expr(trimmed).map(Derivation::MathExpr).map_err(|expr_err| {
                // report whichever grammar got further
                if expr_err.offset >= program_err.offset {
                    expr_err
                } else {
                    program_err
                }
            }),
        }
    }

    /// Parses with the grammar named by an answer format.
    pub fn parse_as(format: AnswerFormat, text: &str) -> Result<Derivation, ParseError> {
        match format {
            AnswerFormat::Program => parse_program(text).map(Derivation::Program),
            AnswerFormat::MathExpr => parse_math_expr(text).map(Derivation::MathExpr),
            AnswerFormat::Sql => parse_sql(text).map(Derivation::Sql),
            AnswerFormat::Direct => Derivation::parse(text),
        }
    }

    pub fn format(&self) -> AnswerFormat {
        match self {
            Derivation::Program(_) => AnswerFormat::Program,
            Derivation::MathExpr(_) => AnswerFormat::MathExpr,
            Derivation::Sql(_) => AnswerFormat::Sql,
        }
    }

    /// Executes against `table` (only SQL reads it) and returns the answer text.
    pub fn execute(&self, table: &UnifiedTable) -> Result<String, ExecError> {
        match self {
            Derivation::Program(p) => Ok(eval_program(p)?.to_string()),
            Derivation::MathExpr(e) => Ok(crate::numeric::format_number(eval_math_expr(e)?)),
            Derivation::Sql(s) => Ok(exec_sql(&s.resolve(table)?, table)?),
        }
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Derivation::Program(p) => p.fmt(f),
            Derivation::MathExpr(e) => e.fmt(f),
            Derivation::Sql(s) => s.fmt(f),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExecError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Sql(#[from] SqlError),
}
