use crate::problem::Sense;

use super::error::Span;

/// A parsed problem document. Spans point back into the source text.
#[derive(Debug, Clone)]
pub struct Document {
    pub decls: Vec<Decl>,
    pub objective: Objective,
    pub constraints: Vec<ConstraintClause>,
    pub partition: PartitionClause,
}

#[derive(Debug, Clone)]
pub struct Decl {
    pub name: String,
    pub name_span: Span,
    pub rows: usize,
    /// `None` for the vector form `x(n)`.
    pub cols: Option<usize>,
    pub kind: DeclKind,
}

impl Decl {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols.unwrap_or(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attr {
    None,
    Nonneg,
    Nonpos,
}

#[derive(Debug, Clone)]
pub enum DeclKind {
    Var { attr: Attr },
    Param { attr: Attr, data: Data, data_span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    /// Rows of a dense literal; a bare number is a single 1x1 row.
    Literal(Vec<Vec<f64>>),
    /// Comma-separated values, one matrix row per line, resolved relative to
    /// the document's directory.
    Csv(String),
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub sense: Sense,
    pub expr: Ast,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ConstraintClause {
    Compare { op: Cmp, lhs: Ast, rhs: Ast, span: Span },
    Soc { t: Ast, x: Ast, span: Span },
}

impl ConstraintClause {
    pub fn span(&self) -> Span {
        match self {
            ConstraintClause::Compare { span, .. } | ConstraintClause::Soc { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionClause {
    pub x: Vec<(String, Span)>,
    pub y: Vec<(String, Span)>,
    pub relax: bool,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    /// Elementwise product; a numeric literal operand scales instead.
    Mul,
    MatMul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::MatMul => "@",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::MatMul => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ast {
    pub kind: AstKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum AstKind {
    Number(f64),
    Ident(String),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    /// A function call; `axis` is set for `sum(e, axis=k)`.
    Call {
        name: String,
        args: Vec<Ast>,
        axis: Option<u8>,
    },
}

impl Ast {
    /// The value of a literal number, possibly negated.
    pub fn as_number(&self) -> Option<f64> {
        match &self.kind {
            AstKind::Number(v) => Some(*v),
            AstKind::Neg(inner) => inner.as_number().map(|v| -v),
            _ => None,
        }
    }
}
