use std::fmt;

use serde::Serialize;

/// A source range: 1-based line and column, length in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl Span {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        Self { line, column, length }
    }

    /// The smallest span covering both, assuming `self` starts first and both
    /// sit on the same line; multi-line ranges keep the start only.
    pub fn to(self, end: Span) -> Span {
        if end.line == self.line && end.column >= self.column {
            Span::new(self.line, self.column, end.column + end.length - self.column)
        } else {
            self
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Lexical,
    Syntax,
    /// Undeclared or duplicate names, bad data, partition problems.
    Semantic,
    Shape,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Lexical => "lexical error",
            ErrorKind::Syntax => "syntax error",
            ErrorKind::Semantic => "error",
            ErrorKind::Shape => "shape error",
        })
    }
}

/// An error tied to a location in a problem document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocError {
    pub kind: ErrorKind,
    pub span: Span,
    pub message: String,
}

impl DocError {
    pub fn lex(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Lexical, span, message)
    }

    pub fn syntax(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Syntax, span, message)
    }

    pub fn semantic(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Semantic, span, message)
    }

    pub fn shape(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Shape, span, message)
    }

    fn new(kind: ErrorKind, span: Span, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.span, self.kind, self.message)
    }
}

impl std::error::Error for DocError {}
