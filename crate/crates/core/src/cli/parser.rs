//! Recursive-descent parser for problem documents.
//!
//! ```text
//! doc        := decl* objective ["subject" "to"] constraint* partition
//! decl       := "var" ID shape [attr] | "param" ID shape [attr] "=" data
//! shape      := "(" INT ["," INT] ")"
//! attr       := "nonneg" | "nonpos"
//! data       := NUMBER | "[" row (";" row)* "]" | "@" "csv" "(" STRING ")"
//! objective  := ("minimize" | "maximize") expr
//! constraint := expr ("<=" | ">=" | "==") expr | "soc" "(" expr "," expr ")"
//! partition  := "partition" "[" ids "]" "[" ids "]" ["relax"]
//! expr       := term (("+" | "-") term)*
//! term       := unary (("*" | "@") unary)*
//! unary      := "-" unary | primary
//! primary    := NUMBER | ID | ID "(" args ")" | "(" expr ")"
//! ```
//!
//! Any clause may end with `;`. A `+` or `-` at the start of a line, outside
//! parentheses, begins a new clause rather than continuing the expression.

use crate::problem::Sense;

use super::ast::*;
use super::error::{DocError, Span};
use super::lexer::{tokenize, Tok, Token};

const KEYWORDS: &[&str] = &[
    "var",
    "param",
    "nonneg",
    "nonpos",
    "minimize",
    "maximize",
    "subject",
    "to",
    "partition",
    "relax",
];

/// Function names accepted in expressions with their argument counts
/// (`usize::MAX` for any number of at least one).
pub(crate) const FUNCTIONS: &[(&str, usize)] = &[
    ("sum_squares", 1),
    ("norm1", 1),
    ("norm2", 1),
    ("norm_inf", 1),
    ("abs", 1),
    ("square", 1),
    ("sum", 1),
    ("trace", 1),
    ("diff", 1),
    ("transpose", 1),
    ("convolve", 2),
    ("maximum", 2),
    ("vstack", usize::MAX),
    ("hstack", usize::MAX),
];

pub fn parse_problem(src: &str) -> Result<Document, DocError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    p.document()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Bracket nesting inside the current expression.
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, context: &str) -> Result<Span, DocError> {
        if self.at(&tok) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("{tok} {context}")))
        }
    }

    fn expect_keyword(&mut self, kw: &str, context: &str) -> Result<Span, DocError> {
        if self.at_keyword(kw) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{kw}` {context}")))
        }
    }

    fn unexpected(&self, wanted: &str) -> DocError {
        let t = self.peek();
        DocError::syntax(t.span, format!("expected {wanted}, found {}", t.tok))
    }

    fn ident(&mut self, context: &str) -> Result<(String, Span), DocError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            _ => Err(self.unexpected(&format!("an identifier {context}"))),
        }
    }

    fn int(&mut self, context: &str) -> Result<usize, DocError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.bump();
                usize::try_from(v).map_err(|_| DocError::syntax(self.prev_span(), "dimension out of range"))
            }
            _ => Err(self.unexpected(&format!("an integer {context}"))),
        }
    }

    fn semis(&mut self) {
        while self.eat(&Tok::Semi) {}
    }

    fn document(&mut self) -> Result<Document, DocError> {
        let mut decls = Vec::new();
        self.semis();
        while self.at_keyword("var") || self.at_keyword("param") {
            decls.push(self.decl()?);
            self.semis();
        }
        if !(self.at_keyword("minimize") || self.at_keyword("maximize")) {
            return Err(self.unexpected("a declaration or an objective (`minimize` or `maximize`)"));
        }
        let objective = self.objective()?;
        self.semis();
        if self.at_keyword("subject") {
            self.bump();
            self.expect_keyword("to", "after `subject`")?;
        }
        self.semis();
        let mut constraints = Vec::new();
        while !self.at_keyword("partition") {
            if self.at(&Tok::Eof) {
                return Err(self.unexpected("a constraint or the partition clause (`partition [..] [..]`)"));
            }
            constraints.push(self.constraint()?);
            self.semis();
        }
        let partition = self.partition()?;
        self.semis();
        if !self.at(&Tok::Eof) {
            return Err(self.unexpected("end of input after the partition clause"));
        }
        Ok(Document {
            decls,
            objective,
            constraints,
            partition,
        })
    }

    fn decl(&mut self) -> Result<Decl, DocError> {
        let is_param = self.at_keyword("param");
        self.bump();
        let (name, name_span) = self.ident("after the declaration keyword")?;
        self.expect(Tok::LParen, "before the dimensions")?;
        let rows = self.int("for the first dimension")?;
        let cols = if self.eat(&Tok::Comma) {
            Some(self.int("for the second dimension")?)
        } else {
            None
        };
        self.expect(Tok::RParen, "after the dimensions")?;
        let attr = if self.at_keyword("nonneg") {
            self.bump();
            Attr::Nonneg
        } else if self.at_keyword("nonpos") {
            self.bump();
            Attr::Nonpos
        } else {
            Attr::None
        };
        let kind = if is_param {
            self.expect(Tok::Assign, "before the parameter data")?;
            let start = self.peek().span;
            let data = self.data()?;
            DeclKind::Param {
                attr,
                data,
                data_span: start.to(self.prev_span()),
            }
        } else {
            DeclKind::Var { attr }
        };
        Ok(Decl {
            name,
            name_span,
            rows,
            cols,
            kind,
        })
    }

    fn number(&mut self) -> Result<f64, DocError> {
        let negative = self.eat(&Tok::Minus);
        let v = match self.peek().tok {
            Tok::Int(v) => v as f64,
            Tok::Float(v) => v,
            _ => return Err(self.unexpected("a number")),
        };
        self.bump();
        Ok(if negative { -v } else { v })
    }

    fn data(&mut self) -> Result<Data, DocError> {
        if self.eat(&Tok::At) {
            self.expect_keyword("csv", "after `@`")?;
            self.expect(Tok::LParen, "after `@csv`")?;
            let path = match &self.peek().tok {
                Tok::Str(s) => s.clone(),
                _ => return Err(self.unexpected("a quoted file path")),
            };
            self.bump();
            self.expect(Tok::RParen, "after the file path")?;
            return Ok(Data::Csv(path));
        }
        if self.eat(&Tok::LBracket) {
            let mut rows = vec![Vec::new()];
            loop {
                rows.last_mut().unwrap().push(self.number()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                if self.eat(&Tok::Semi) {
                    rows.push(Vec::new());
                    continue;
                }
                self.expect(Tok::RBracket, "to close the matrix literal")?;
                break;
            }
            return Ok(Data::Literal(rows));
        }
        Ok(Data::Literal(vec![vec![self.number()?]]))
    }

    fn objective(&mut self) -> Result<Objective, DocError> {
        let t = self.bump();
        let sense = match &t.tok {
            Tok::Ident(s) if s == "maximize" => Sense::Maximize,
            _ => Sense::Minimize,
        };
        let expr = self.clause_expr()?;
        Ok(Objective {
            sense,
            span: t.span.to(expr.span),
            expr,
        })
    }

    fn constraint(&mut self) -> Result<ConstraintClause, DocError> {
        if self.at_keyword("soc") && self.tokens[self.pos + 1].tok == Tok::LParen {
            let start = self.bump().span;
            self.bump();
            self.depth += 1;
            let t = self.expr()?;
            self.expect(Tok::Comma, "between the arguments of `soc`")?;
            let x = self.expr()?;
            let end = self.expect(Tok::RParen, "to close `soc`")?;
            self.depth -= 1;
            return Ok(ConstraintClause::Soc {
                t,
                x,
                span: start.to(end),
            });
        }
        let lhs = self.clause_expr()?;
        let op = match self.peek().tok {
            Tok::Le => Cmp::Le,
            Tok::Ge => Cmp::Ge,
            Tok::EqEq => Cmp::Eq,
            _ => return Err(self.unexpected("`<=`, `>=` or `==` in a constraint")),
        };
        self.bump();
        let rhs = self.clause_expr()?;
        Ok(ConstraintClause::Compare {
            op,
            span: lhs.span.to(rhs.span),
            lhs,
            rhs,
        })
    }

    fn partition(&mut self) -> Result<PartitionClause, DocError> {
        let start = self.expect_keyword("partition", "")?;
        let x = self.id_list()?;
        let y = self.id_list()?;
        let relax = if self.at_keyword("relax") {
            self.bump();
            true
        } else {
            false
        };
        Ok(PartitionClause {
            x,
            y,
            relax,
            span: start.to(self.prev_span()),
        })
    }

    fn id_list(&mut self) -> Result<Vec<(String, Span)>, DocError> {
        self.expect(Tok::LBracket, "to open a partition block")?;
        let mut out = Vec::new();
        if self.eat(&Tok::RBracket) {
            return Ok(out);
        }
        loop {
            out.push(self.ident("in a partition block")?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RBracket, "to close a partition block")?;
            return Ok(out);
        }
    }

    fn clause_expr(&mut self) -> Result<Ast, DocError> {
        self.depth = 0;
        self.expr()
    }

    /// A `+`/`-` that starts a new line at the top level ends the clause.
    fn continues(&self) -> bool {
        self.depth > 0 || self.peek().span.line == self.prev_span().line
    }

    fn expr(&mut self) -> Result<Ast, DocError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            if !self.continues() {
                break;
            }
            self.bump();
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, DocError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::At => BinOp::MatMul,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, DocError> {
        if self.at(&Tok::Minus) {
            let start = self.bump().span;
            let inner = self.unary()?;
            return Ok(Ast {
                span: start.to(inner.span),
                kind: AstKind::Neg(Box::new(inner)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Ast, DocError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Int(v) => {
                self.bump();
                Ok(Ast {
                    kind: AstKind::Number(v as f64),
                    span: t.span,
                })
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Ast {
                    kind: AstKind::Number(v),
                    span: t.span,
                })
            }
            Tok::LParen => {
                self.bump();
                self.depth += 1;
                let inner = self.expr()?;
                let end = self.expect(Tok::RParen, "to close the parenthesis")?;
                self.depth -= 1;
                Ok(Ast {
                    kind: inner.kind,
                    span: t.span.to(end),
                })
            }
            Tok::Ident(ref name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                if self.at(&Tok::LParen) {
                    self.call(name.clone(), t.span)
                } else {
                    Ok(Ast {
                        kind: AstKind::Ident(name.clone()),
                        span: t.span,
                    })
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn call(&mut self, name: String, name_span: Span) -> Result<Ast, DocError> {
        let Some(&(_, arity)) = FUNCTIONS.iter().find(|f| f.0 == name) else {
            return Err(DocError::semantic(name_span, format!("unknown atom `{name}`")));
        };
        self.bump();
        self.depth += 1;
        let mut args = Vec::new();
        let mut axis = None;
        if !self.at(&Tok::RParen) {
            loop {
                if name == "sum" && args.len() == 1 {
                    if self.at_keyword("axis") {
                        self.bump();
                        self.expect(Tok::Assign, "after `axis`")?;
                    }
                    let k = self.int("for the summation axis")?;
                    if k > 1 {
                        return Err(DocError::syntax(self.prev_span(), "axis must be 0 or 1"));
                    }
                    axis = Some(k as u8);
                } else {
                    args.push(self.expr()?);
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        let end = self.expect(Tok::RParen, "to close the argument list")?;
        self.depth -= 1;
        let span = name_span.to(end);
        let ok = if arity == usize::MAX {
            !args.is_empty()
        } else {
            args.len() == arity
        };
        if !ok {
            let wanted = if arity == usize::MAX {
                "at least 1".to_string()
            } else {
                arity.to_string()
            };
            return Err(DocError::syntax(
                span,
                format!("`{name}` takes {wanted} argument(s), found {}", args.len()),
            ));
        }
        Ok(Ast {
            kind: AstKind::Call { name, args, axis },
            span,
        })
    }
}

fn binary(op: BinOp, lhs: Ast, rhs: Ast) -> Ast {
    Ast {
        span: lhs.span.to(rhs.span),
        kind: AstKind::Binary(op, Box::new(lhs), Box::new(rhs)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::error::ErrorKind;

    const NMF: &str = r#"
        var X(5, 5) nonneg
        var Y(5, 10) nonneg
        param A(5, 10) = @csv("A.csv")
        minimize sum_squares(X @ Y - A)
        subject to
        partition [X] [Y]
    "#;

    #[test]
    fn parses_nmf() {
        let doc = parse_problem(NMF).unwrap();
        assert_eq!(doc.decls.len(), 3);
        assert!(matches!(&doc.decls[2].kind, DeclKind::Param { data: Data::Csv(p), .. } if p == "A.csv"));
        assert_eq!(doc.partition.x[0].0, "X");
        assert!(!doc.partition.relax);
    }

    #[test]
    fn precedence() {
        let doc = parse_problem("var x(1)\nminimize 1 + 2 * x @ x - -x\npartition [x] []").unwrap();
        let AstKind::Binary(BinOp::Sub, lhs, _) = &doc.objective.expr.kind else {
            panic!()
        };
        let AstKind::Binary(BinOp::Add, _, prod) = &lhs.kind else {
            panic!()
        };
        assert!(matches!(prod.kind, AstKind::Binary(BinOp::MatMul, _, _)));
    }

    #[test]
    fn leading_minus_starts_a_new_constraint() {
        let src = "var x(1)\nvar y(1)\nminimize x\nsubject to\nx <= 1\n-y <= 2\n(x\n - y) == 0\npartition [x] [y]";
        let doc = parse_problem(src).unwrap();
        assert_eq!(doc.constraints.len(), 3);
    }

    #[test]
    fn missing_partition() {
        let err = parse_problem("var x(1)\nminimize x\nsubject to\nx >= 0\n").unwrap_err();
        assert_eq!(err.kind, ErrorKind::Syntax);
        assert!(err.message.contains("partition"), "{err}");
        assert_eq!(err.span.line, 5);
    }

    #[test]
    fn unknown_atom() {
        let err = parse_problem("var x(1)\nminimize logsumexp(x)\npartition [x] []").unwrap_err();
        assert_eq!(err.span, Span::new(2, 10, 9));
        assert!(err.message.contains("unknown atom"));
    }

    #[test]
    fn sum_axis_and_literals() {
        let doc =
            parse_problem("param c(2, 2) = [1, -2; 3e0, 4.5]\nvar z(2, 2)\nminimize sum(z, axis=1)\npartition [z] []")
                .unwrap();
        assert!(matches!(&doc.decls[0].kind, DeclKind::Param { data: Data::Literal(r), .. } if r[0][1] == -2.0));
        assert!(matches!(&doc.objective.expr.kind, AstKind::Call { axis: Some(1), .. }));
    }
}
