use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{Assignment, Atom, Expr, ExprError, NodeKind, ParamValues, Shape};

impl Expr {
    /// Numeric value of the expression. Shared subexpressions are evaluated once.
    pub fn eval(&self, vars: &Assignment, params: &ParamValues) -> Result<DMatrix<f64>, ExprError> {
        let mut memo = HashMap::new();
        eval_rec(self, vars, params, &mut memo)
    }

    /// Value of a scalar expression.
    pub fn eval_scalar(&self, vars: &Assignment, params: &ParamValues) -> Result<f64, ExprError> {
        let v = self.eval(vars, params)?;
        if v.len() != 1 {
            return Err(ExprError::ValueShape {
                name: self.to_string(),
                expected: Shape::SCALAR,
                found: self.shape(),
            });
        }
        Ok(v[(0, 0)])
    }
}

fn eval_rec(
    e: &Expr,
    vars: &Assignment,
    params: &ParamValues,
    memo: &mut HashMap<u64, DMatrix<f64>>,
) -> Result<DMatrix<f64>, ExprError> {
    if let Some(v) = memo.get(&e.id()) {
        return Ok(v.clone());
    }
    let value = match e.kind() {
        NodeKind::Constant(c) => (**c).clone(),
        NodeKind::Variable(v) => {
            let value = vars
                .get(&v.id)
                .ok_or_else(|| ExprError::MissingVariable(v.name.to_string()))?;
            check_shape(&v.name, v.shape, value)?;
            value.clone()
        }
        NodeKind::Parameter(p) => {
            let value = params
                .get(&p.id)
                .ok_or_else(|| ExprError::MissingParameter(p.name.to_string()))?;
            check_shape(&p.name, p.shape, value)?;
            value.clone()
        }
        NodeKind::Atom(atom, args) => {
            let vals = args
                .iter()
                .map(|a| eval_rec(a, vars, params, memo))
                .collect::<Result<Vec<_>, _>>()?;
            apply_numeric(*atom, &vals, e.shape())
        }
    };
    memo.insert(e.id(), value.clone());
    Ok(value)
}

fn check_shape(name: &str, expected: Shape, value: &DMatrix<f64>) -> Result<(), ExprError> {
    let found = Shape::new(value.nrows(), value.ncols());
    if found != expected {
        return Err(ExprError::ValueShape {
            name: name.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Entry `(i, j)` of `m` with scalar broadcasting.
fn at(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    if m.len() == 1 {
        m[(0, 0)]
    } else {
        m[(i, j)]
    }
}

fn zip_broadcast(a: &DMatrix<f64>, b: &DMatrix<f64>, shape: Shape, f: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(shape.rows, shape.cols, |i, j| f(at(a, i, j), at(b, i, j)))
}

/// Evaluate one atom on numeric arguments. Shapes are assumed valid.
pub(crate) fn apply_numeric(atom: Atom, vals: &[DMatrix<f64>], shape: Shape) -> DMatrix<f64> {
    let a = &vals[0];
    match atom {
        Atom::Add => {
            let mut out = DMatrix::zeros(shape.rows, shape.cols);
            for v in vals {
                out = zip_broadcast(&out, v, shape, |x, y| x + y);
            }
            out
        }
        Atom::Negate => -a,
        Atom::Scale(c) => a * c,
        Atom::MatMul => a * &vals[1],
        Atom::Multiply => zip_broadcast(a, &vals[1], shape, |x, y| x * y),
        Atom::Maximum => zip_broadcast(a, &vals[1], shape, f64::max),
        Atom::Sum => DMatrix::from_element(1, 1, a.sum()),
        Atom::SumAxis(0) => DMatrix::from_fn(1, a.ncols(), |_, j| a.column(j).sum()),
        Atom::SumAxis(_) => DMatrix::from_fn(a.nrows(), 1, |i, _| a.row(i).sum()),
        Atom::SumSquares => DMatrix::from_element(1, 1, a.iter().map(|v| v * v).sum()),
        Atom::Square => a.map(|v| v * v),
        Atom::Abs => a.map(f64::abs),
        Atom::Norm1 => DMatrix::from_element(1, 1, a.iter().map(|v| v.abs()).sum()),
        Atom::Norm2 => DMatrix::from_element(1, 1, a.iter().map(|v| v * v).sum::<f64>().sqrt()),
        Atom::NormInf => DMatrix::from_element(1, 1, a.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
        Atom::Trace => DMatrix::from_element(1, 1, a.trace()),
        Atom::Diff => DMatrix::from_fn(shape.rows, 1, |i, _| a[(i, 0)] - a[(i + 1, 0)]),
        Atom::Transpose => a.transpose(),
        Atom::VStack => {
            let mut out = DMatrix::zeros(shape.rows, shape.cols);
            let mut r = 0;
            for v in vals {
                out.view_mut((r, 0), (v.nrows(), v.ncols())).copy_from(v);
                r += v.nrows();
            }
            out
        }
        Atom::HStack => {
            let mut out = DMatrix::zeros(shape.rows, shape.cols);
            let mut c = 0;
            for v in vals {
                out.view_mut((0, c), (v.nrows(), v.ncols())).copy_from(v);
                c += v.ncols();
            }
            out
        }
        Atom::Reshape(s) => DMatrix::from_column_slice(s.rows, s.cols, a.as_slice()),
        Atom::Convolve => {
            let b = &vals[1];
            let mut out = DMatrix::zeros(shape.rows, 1);
            for i in 0..a.nrows() {
                for j in 0..b.nrows() {
                    out[(i + j, 0)] += a[(i, 0)] * b[(j, 0)];
                }
            }
            out
        }
    }
}
