//! Verilog subset: parsing, checking, printing and hierarchy flattening.

pub mod ast;
mod check;
pub mod eval;
mod flatten;
mod lexer;
pub mod parser;
pub mod printer;
pub mod scope;

use ast::Span;
use serde::Serialize;
use std::fmt;

pub use ast::SourceUnit;
pub use check::subset_check;
pub use flatten::{flatten, FlattenError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseErrorKind {
    Syntax,
    Unsupported,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl ParseError {
    pub(crate) fn syntax(msg: &str, line: u32, col: u32) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            message: format!("syntax error: {msg}"),
            line,
            col,
        }
    }

    pub(crate) fn unsupported(what: &str, span: Span) -> Self {
        ParseError {
            kind: ParseErrorKind::Unsupported,
            message: format!("unsupported construct: {what}"),
            line: span.line,
            col: span.col,
        }
    }

    /// `file:line:col: error: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: error: {}", self.line, self.col, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            line: span.line,
            col: span.col,
        }
    }

    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}: {}", self.line, self.col, self.severity, self.message)
    }
}

pub fn parse_source(text: &str) -> Result<SourceUnit, ParseError> {
    parser::parse(text)
}

pub fn pretty_print(unit: &SourceUnit) -> String {
    printer::print_unit(unit)
}

/// Pick the top module: the only module nobody instantiates.
pub fn infer_top(unit: &SourceUnit) -> Option<&str> {
    let used: std::collections::BTreeSet<&str> = unit
        .modules
        .iter()
        .flat_map(|m| m.instances().map(|i| i.module.as_str()))
        .collect();
    let mut roots = unit.modules.iter().filter(|m| !used.contains(m.name.as_str()));
    let first = roots.next()?;
    match roots.next() {
        None => Some(&first.name),
        Some(_) => None,
    }
}
