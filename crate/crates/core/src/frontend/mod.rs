//! Source language: lexer, parser and lowering to a pCFG.

pub mod ast;
mod lexer;
mod lower;
mod parser;

pub use ast::{Cond, Rhs, SourceProgram, Stmt, StmtKind};
pub use lower::{lower_to_pcfg, lower_with_cap};
pub use parser::{parse_condition, parse_program};

use crate::model::Pcfg;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: product of two non-constant terms")]
    NonLinearExpression { line: usize, col: usize },
    #[error("{line}:{col}: more than one sampling term in one assignment")]
    MultipleSamplesInAssignment { line: usize, col: usize },
}

impl ParseError {
    pub fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. }
            | ParseError::NonLinearExpression { line, col }
            | ParseError::MultipleSamplesInAssignment { line, col } => (*line, *col),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "SyntaxError",
            ParseError::NonLinearExpression { .. } => "NonLinearExpression",
            ParseError::MultipleSamplesInAssignment { .. } => "MultipleSamplesInAssignment",
        }
    }
}

/// Parse and lower in one step.
pub fn compile(text: &str) -> Result<Pcfg, ParseError> {
    lower_to_pcfg(&parse_program(text)?)
}
