use std::fmt;

use serde::Serialize;

use super::{Curvature, Monotonicity, Shape, Sign};

/// Atomic functions an expression can be built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    /// Elementwise sum; scalar arguments broadcast.
    Add,
    Negate,
    /// Multiplication by a fixed scalar.
    Scale(f64),
    MatMul,
    /// Elementwise product; scalar arguments broadcast.
    Multiply,
    Sum,
    /// `0` sums each column (result `1 x cols`), `1` sums each row (result `rows x 1`).
    SumAxis(u8),
    SumSquares,
    Square,
    Abs,
    Norm1,
    /// Euclidean norm of all entries (Frobenius norm for matrices).
    Norm2,
    NormInf,
    /// Elementwise maximum of two arguments.
    Maximum,
    Trace,
    /// Forward difference of a column vector: `y[i] - y[i+1]`, length `n - 1`.
    Diff,
    Transpose,
    VStack,
    HStack,
    /// Column-major reshape.
    Reshape(Shape),
    /// Full 1-D convolution of two column vectors, length `n + m - 1`.
    Convolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl Atom {
    pub fn name(&self) -> &'static str {
        match self {
            Atom::Add => "add",
            Atom::Negate => "negate",
            Atom::Scale(_) => "scale",
            Atom::MatMul => "matmul",
            Atom::Multiply => "multiply",
            Atom::Sum => "sum",
            Atom::SumAxis(_) => "sum",
            Atom::SumSquares => "sum_squares",
            Atom::Square => "square",
            Atom::Abs => "abs",
            Atom::Norm1 => "norm1",
            Atom::Norm2 => "norm2",
            Atom::NormInf => "norm_inf",
            Atom::Maximum => "maximum",
            Atom::Trace => "trace",
            Atom::Diff => "diff",
            Atom::Transpose => "transpose",
            Atom::VStack => "vstack",
            Atom::HStack => "hstack",
            Atom::Reshape(_) => "reshape",
            Atom::Convolve => "convolve",
        }
    }

    pub fn arity(&self) -> Arity {
        match self {
            Atom::Add | Atom::VStack | Atom::HStack => Arity::AtLeast(1),
            Atom::MatMul | Atom::Multiply | Atom::Maximum | Atom::Convolve => Arity::Exactly(2),
            _ => Arity::Exactly(1),
        }
    }

    /// Products of two expressions; the only atoms that can couple variables.
    pub fn is_product(&self) -> bool {
        matches!(self, Atom::MatMul | Atom::Multiply | Atom::Convolve)
    }

    /// Curvature of the atom as a function of its arguments. Products report
    /// `Affine` here and are handled separately, since their curvature depends
    /// on which side is constant.
    pub fn curvature(&self) -> Curvature {
        match self {
            Atom::SumSquares | Atom::Square | Atom::Abs | Atom::Norm1 | Atom::Norm2 | Atom::NormInf | Atom::Maximum => {
                Curvature::Convex
            }
            _ => Curvature::Affine,
        }
    }

    /// Monotonicity in argument `index`. Products return `None`; their
    /// monotonicity depends on the sign of the other operand.
    pub fn monotonicity(&self, _index: usize) -> Monotonicity {
        match self {
            Atom::Add
            | Atom::Sum
            | Atom::SumAxis(_)
            | Atom::Trace
            | Atom::Transpose
            | Atom::VStack
            | Atom::HStack
            | Atom::Reshape(_)
            | Atom::Maximum => Monotonicity::Nondecreasing,
            Atom::Negate => Monotonicity::Nonincreasing,
            Atom::Scale(c) if *c >= 0.0 => Monotonicity::Nondecreasing,
            Atom::Scale(_) => Monotonicity::Nonincreasing,
            Atom::SumSquares | Atom::Square | Atom::Abs | Atom::Norm1 | Atom::Norm2 | Atom::NormInf => {
                Monotonicity::SignDependent
            }
            Atom::Diff | Atom::MatMul | Atom::Multiply | Atom::Convolve => Monotonicity::None,
        }
    }

    /// Sign of the result given the signs of the arguments.
    pub fn sign(&self, args: &[Sign]) -> Sign {
        match self {
            Atom::Add | Atom::VStack | Atom::HStack => args.iter().copied().reduce(Sign::add).unwrap_or(Sign::Zero),
            Atom::Negate => args[0].neg(),
            Atom::Scale(c) => Sign::of_values(&[*c]).mul(args[0]),
            Atom::MatMul | Atom::Multiply | Atom::Convolve => args[0].mul(args[1]),
            Atom::Sum | Atom::SumAxis(_) | Atom::Trace | Atom::Transpose | Atom::Reshape(_) => args[0],
            Atom::SumSquares | Atom::Square | Atom::Abs | Atom::Norm1 | Atom::Norm2 | Atom::NormInf => {
                if args[0].is_zero() {
                    Sign::Zero
                } else {
                    Sign::Nonneg
                }
            }
            Atom::Maximum => {
                let (a, b) = (args[0], args[1]);
                if a.is_nonneg() || b.is_nonneg() {
                    if a.is_nonpos() && b.is_nonpos() {
                        Sign::Zero
                    } else {
                        Sign::Nonneg
                    }
                } else if a.is_nonpos() && b.is_nonpos() {
                    Sign::Nonpos
                } else {
                    Sign::Unknown
                }
            }
            Atom::Diff => {
                if args[0].is_zero() {
                    Sign::Zero
                } else {
                    Sign::Unknown
                }
            }
        }
    }

    /// Shape of the result, or a reason the argument shapes are rejected.
    pub fn shape(&self, args: &[Shape]) -> Result<Shape, String> {
        match self.arity() {
            Arity::Exactly(n) if args.len() != n => {
                return Err(format!("expects {n} argument(s), got {}", args.len()));
            }
            Arity::AtLeast(n) if args.len() < n => {
                return Err(format!("expects at least {n} argument(s), got {}", args.len()));
            }
            _ => {}
        }
        let a = args[0];
        match self {
            Atom::Add | Atom::Multiply | Atom::Maximum => {
                let mut out = a;
                for &s in &args[1..] {
                    out = broadcast(out, s).ok_or_else(|| "incompatible shapes".to_string())?;
                }
                Ok(out)
            }
            Atom::Negate | Atom::Scale(_) | Atom::Square | Atom::Abs => Ok(a),
            Atom::MatMul => {
                let b = args[1];
                if a.cols != b.rows {
                    return Err("inner dimensions differ".into());
                }
                Ok(Shape::new(a.rows, b.cols))
            }
            Atom::Sum | Atom::SumSquares | Atom::Norm1 | Atom::Norm2 | Atom::NormInf => Ok(Shape::SCALAR),
            Atom::SumAxis(0) => Ok(Shape::new(1, a.cols)),
            Atom::SumAxis(1) => Ok(Shape::new(a.rows, 1)),
            Atom::SumAxis(axis) => Err(format!("axis must be 0 or 1, got {axis}")),
            Atom::Trace => {
                if a.rows != a.cols {
                    return Err("argument is not square".into());
                }
                Ok(Shape::SCALAR)
            }
            Atom::Diff => {
                if !a.is_column() || a.rows < 2 {
                    return Err("argument must be a column vector of length at least 2".into());
                }
                Ok(Shape::vector(a.rows - 1))
            }
            Atom::Transpose => Ok(a.transpose()),
            Atom::VStack => {
                if args.iter().any(|s| s.cols != a.cols) {
                    return Err("column counts differ".into());
                }
                Ok(Shape::new(args.iter().map(|s| s.rows).sum(), a.cols))
            }
            Atom::HStack => {
                if args.iter().any(|s| s.rows != a.rows) {
                    return Err("row counts differ".into());
                }
                Ok(Shape::new(a.rows, args.iter().map(|s| s.cols).sum()))
            }
            Atom::Reshape(target) => {
                if target.size() != a.size() || target.size() == 0 {
                    return Err(format!("cannot reshape {a} into {target}"));
                }
                Ok(*target)
            }
            Atom::Convolve => {
                let b = args[1];
                if !a.is_column() || !b.is_column() {
                    return Err("arguments must be column vectors".into());
                }
                Ok(Shape::vector(a.rows + b.rows - 1))
            }
        }
    }
}

/// Common shape of two operands under scalar broadcasting.
pub fn broadcast(a: Shape, b: Shape) -> Option<Shape> {
    if a == b || b.is_scalar() {
        Some(a)
    } else if a.is_scalar() {
        Some(b)
    } else {
        None
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Scale(c) => write!(f, "scale({c})"),
            Atom::SumAxis(a) => write!(f, "sum(axis={a})"),
            Atom::Reshape(s) => write!(f, "reshape({s})"),
            other => f.write_str(other.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rules() {
        assert_eq!(
            Atom::MatMul.shape(&[Shape::new(5, 3), Shape::new(3, 7)]),
            Ok(Shape::new(5, 7))
        );
        assert_eq!(
            Atom::Convolve.shape(&[Shape::vector(120), Shape::vector(40)]),
            Ok(Shape::vector(159))
        );
        assert!(Atom::Add.shape(&[Shape::new(2, 2), Shape::new(3, 3)]).is_err());
        assert_eq!(
            Atom::Add.shape(&[Shape::new(2, 2), Shape::SCALAR]),
            Ok(Shape::new(2, 2))
        );
        assert_eq!(Atom::SumAxis(1).shape(&[Shape::new(4, 3)]), Ok(Shape::vector(4)));
        assert_eq!(Atom::SumAxis(0).shape(&[Shape::new(4, 3)]), Ok(Shape::new(1, 3)));
        assert_eq!(Atom::Diff.shape(&[Shape::vector(5)]), Ok(Shape::vector(4)));
        assert!(Atom::Trace.shape(&[Shape::new(2, 3)]).is_err());
        assert!(Atom::Maximum.shape(&[Shape::SCALAR]).is_err());
    }

    #[test]
    fn every_atom_declares_monotonicity() {
        let atoms = [
            Atom::Add,
            Atom::Negate,
            Atom::Scale(-2.0),
            Atom::MatMul,
            Atom::Multiply,
            Atom::Sum,
            Atom::SumAxis(0),
            Atom::SumSquares,
            Atom::Square,
            Atom::Abs,
            Atom::Norm1,
            Atom::Norm2,
            Atom::NormInf,
            Atom::Maximum,
            Atom::Trace,
            Atom::Diff,
            Atom::Transpose,
            Atom::VStack,
            Atom::HStack,
            Atom::Reshape(Shape::SCALAR),
            Atom::Convolve,
        ];
        for atom in atoms {
            let _ = atom.monotonicity(0);
            if atom.curvature() == Curvature::Convex {
                assert_ne!(atom.monotonicity(0), Monotonicity::None, "{atom}");
            }
        }
        assert_eq!(Atom::Scale(-2.0).monotonicity(0), Monotonicity::Nonincreasing);
        assert_eq!(
            Monotonicity::SignDependent.resolve(Sign::Nonpos),
            Monotonicity::Nonincreasing
        );
    }
}
