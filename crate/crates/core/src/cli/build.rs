//! Turn a parsed document into a problem, keeping enough source positions to
//! point diagnostics back at the text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DMatrix;

use crate::expr::{Expr, ExprError, Sign};
use crate::problem::{new_problem, BiconvexProblem, Constraint, ProblemError};

use super::ast::*;
use super::error::{DocError, Span};

/// A problem built from a document.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: BiconvexProblem,
    /// Declared variables in declaration order.
    pub variables: Vec<(String, Expr)>,
    spans: HashMap<u64, Span>,
    objective_span: Span,
    constraint_spans: Vec<Span>,
}

impl Built {
    /// Source span for a diagnostic location such as `objective.0.1` or
    /// `constraint.2.0`: the innermost node on the path that came from the
    /// text, or the whole clause.
    pub fn locate(&self, location: &str) -> Span {
        let mut parts = location.split('.');
        let (mut node, mut best) = match (parts.next(), parts.clone().next()) {
            (Some("constraint"), Some(i)) => {
                let i: usize = i.parse().unwrap_or(usize::MAX);
                parts.next();
                match (self.problem.constraints().get(i), self.constraint_spans.get(i)) {
                    (Some(c), Some(&span)) => (c.left.clone(), span),
                    _ => return self.objective_span,
                }
            }
            _ => (self.problem.objective().clone(), self.objective_span),
        };
        if let Some(&s) = self.spans.get(&node.id()) {
            best = s;
        }
        for part in parts {
            let Some(next) = part.parse::<usize>().ok().and_then(|i| node.args().get(i).cloned()) else {
                break;
            };
            node = next;
            if let Some(&s) = self.spans.get(&node.id()) {
                best = s;
            }
        }
        best
    }
}

/// Build the problem described by `doc`. CSV paths resolve against `base`.
pub fn build(doc: &Document, base: &Path) -> Result<Built, DocError> {
    let mut b = Builder {
        names: BTreeMap::new(),
        spans: HashMap::new(),
    };
    let mut variables = Vec::new();
    let mut params = Vec::new();
    for d in &doc.decls {
        if b.names.contains_key(&d.name) {
            return Err(DocError::semantic(
                d.name_span,
                format!("`{}` is declared more than once", d.name),
            ));
        }
        let shape = d.shape();
        let leaf = match &d.kind {
            DeclKind::Var { attr } => {
                if *attr == Attr::Nonpos {
                    return Err(DocError::semantic(
                        d.name_span,
                        "variables accept only the `nonneg` attribute",
                    ));
                }
                let e = Expr::variable(&d.name, shape, *attr == Attr::Nonneg)
                    .map_err(|e| DocError::shape(d.name_span, e.to_string()))?;
                variables.push((d.name.clone(), e.clone()));
                e
            }
            DeclKind::Param { attr, data, data_span } => {
                let sign = match attr {
                    Attr::None => Sign::Unknown,
                    Attr::Nonneg => Sign::Nonneg,
                    Attr::Nonpos => Sign::Nonpos,
                };
                let value = load(data, *data_span, shape, d.cols.is_none(), base)?;
                let ok = match attr {
                    Attr::None => true,
                    Attr::Nonneg => value.iter().all(|&v| v >= 0.0),
                    Attr::Nonpos => value.iter().all(|&v| v <= 0.0),
                };
                if !ok {
                    return Err(DocError::semantic(
                        *data_span,
                        format!("data for `{}` violates its sign", d.name),
                    ));
                }
                let e =
                    Expr::parameter(&d.name, shape, sign).map_err(|e| DocError::shape(d.name_span, e.to_string()))?;
                params.push((e.clone(), value));
                e
            }
        };
        b.names.insert(d.name.clone(), leaf);
    }

    let objective = b.expr(&doc.objective.expr)?;
    let mut constraints = Vec::new();
    for c in &doc.constraints {
        let built = match c {
            ConstraintClause::Compare { op, lhs, rhs, span } => {
                let (l, r) = (b.expr(lhs)?, b.expr(rhs)?);
                let out = match op {
                    Cmp::Le => Constraint::leq(&l, &r),
                    Cmp::Ge => Constraint::geq(&l, &r),
                    Cmp::Eq => Constraint::eq(&l, &r),
                };
                out.map_err(|e| DocError::shape(*span, e.to_string()))?
            }
            ConstraintClause::Soc { t, x, span } => {
                let (t, x) = (b.expr(t)?, b.expr(x)?);
                Constraint::soc(&t, &x).map_err(|e| DocError::shape(*span, e.to_string()))?
            }
        };
        constraints.push(built);
    }

    let block = |ids: &[(String, Span)]| -> Result<Vec<Expr>, DocError> {
        ids.iter()
            .map(|(name, span)| match b.names.get(name) {
                Some(e) if e.as_variable().is_some() => Ok(e.clone()),
                Some(_) => Err(DocError::semantic(
                    *span,
                    format!("`{name}` is a parameter, not a variable"),
                )),
                None => Err(DocError::semantic(*span, format!("undeclared identifier `{name}`"))),
            })
            .collect()
    };
    let bx = block(&doc.partition.x)?;
    let by = block(&doc.partition.y)?;
    let mut problem = new_problem(
        doc.objective.sense,
        objective,
        &bx,
        &by,
        constraints,
        doc.partition.relax,
    )
    .map_err(|e| match e {
        ProblemError::NonScalarObjective(_) => DocError::shape(doc.objective.span, e.to_string()),
        _ => DocError::semantic(doc.partition.span, e.to_string()),
    })?;
    let used: Vec<u64> = problem.parameter_exprs().map(Expr::id).collect();
    for (e, value) in params {
        if used.contains(&e.id()) {
            problem
                .set_param(&e, value)
                .map_err(|err| DocError::shape(doc.objective.span, err.to_string()))?;
        }
    }
    Ok(Built {
        problem,
        variables,
        spans: b.spans,
        objective_span: doc.objective.span,
        constraint_spans: doc.constraints.iter().map(ConstraintClause::span).collect(),
    })
}

fn load(data: &Data, span: Span, shape: (usize, usize), vector: bool, base: &Path) -> Result<DMatrix<f64>, DocError> {
    let rows = match data {
        Data::Literal(rows) => rows.clone(),
        Data::Csv(path) => read_csv(&base.join(path)).map_err(|msg| DocError::semantic(span, msg))?,
    };
    if rows.len() == 1 && rows[0].len() == 1 {
        return Ok(DMatrix::from_element(shape.0, shape.1, rows[0][0]));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(DocError::semantic(span, "rows of the data have different lengths"));
    }
    let found = (rows.len(), width);
    let m = if found == shape {
        DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j])
    } else if vector && found == (1, shape.0) {
        DMatrix::from_fn(shape.0, 1, |i, _| rows[0][i])
    } else {
        return Err(DocError::shape(
            span,
            format!("data is {}x{}, declared {}x{}", found.0, found.1, shape.0, shape.1),
        ));
    };
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DocError::semantic(span, "data must be finite"));
    }
    Ok(m)
}

/// Comma-separated rows, blank lines ignored.
fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format!("{} has no data", path.display()));
    }
    Ok(rows)
}

struct Builder {
    names: BTreeMap<String, Expr>,
    spans: HashMap<u64, Span>,
}

impl Builder {
    fn expr(&mut self, a: &Ast) -> Result<Expr, DocError> {
        let shape_err = |e: ExprError| DocError::shape(a.span, e.to_string());
        let e = match &a.kind {
            AstKind::Number(v) => Expr::scalar(*v),
            AstKind::Ident(name) => match self.names.get(name) {
                Some(e) => return Ok(e.clone()),
                None => return Err(DocError::semantic(a.span, format!("undeclared identifier `{name}`"))),
            },
            AstKind::Neg(inner) => match a.as_number() {
                Some(v) => Expr::scalar(v),
                None => self.expr(inner)?.neg(),
            },
            AstKind::Binary(op, l, r) => match (op, l.as_number(), r.as_number()) {
                (BinOp::Mul, Some(c), None) => self.expr(r)?.scale(c),
                (BinOp::Mul, None, Some(c)) => self.expr(l)?.scale(c),
                _ => {
                    let (l, r) = (self.expr(l)?, self.expr(r)?);
                    match op {
                        BinOp::Add => l.add(&r),
                        BinOp::Sub => l.sub(&r),
                        BinOp::Mul => l.multiply(&r),
                        BinOp::MatMul => l.matmul(&r),
                    }
                    .map_err(shape_err)?
                }
            },
            AstKind::Call { name, args, axis } => {
                let args = args.iter().map(|x| self.expr(x)).collect::<Result<Vec<_>, _>>()?;
                let x = &args[0];
                match name.as_str() {
                    "sum_squares" => x.sum_squares(),
                    "norm1" => x.norm1(),
                    "norm2" => x.norm2(),
                    "norm_inf" => x.norm_inf(),
                    "abs" => x.abs(),
                    "square" => x.square(),
                    "sum" => match axis {
                        Some(k) => x.sum_axis(*k).map_err(shape_err)?,
                        None => x.sum(),
                    },
                    "trace" => x.trace().map_err(shape_err)?,
                    "diff" => x.diff().map_err(shape_err)?,
                    "transpose" => x.t(),
                    "convolve" => x.convolve(&args[1]).map_err(shape_err)?,
                    "maximum" => x.maximum(&args[1]).map_err(shape_err)?,
                    "vstack" => Expr::vstack(&args).map_err(shape_err)?,
                    "hstack" => Expr::hstack(&args).map_err(shape_err)?,
                    other => return Err(DocError::semantic(a.span, format!("unknown atom `{other}`"))),
                }
            }
        };
        self.spans.insert(e.id(), a.span);
        Ok(e)
    }
}
