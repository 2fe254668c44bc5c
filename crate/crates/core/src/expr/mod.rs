//! Immutable expression DAGs with shape, sign and curvature analysis.
//!
//! Expressions are reference-counted nodes; cloning an [`Expr`] is cheap and
//! shares the subgraph. Matrices are vectorized column-major wherever a flat
//! vector is needed.
//!
//! Every node caches its sign and its curvature with no variables fixed.
//! [`Expr::curvature_with`] recomputes curvature when some variables are held
//! fixed, treating them as parameters that keep their declared sign.

mod atom;
mod eval;
mod lattice;
mod shape;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use atom::{broadcast, Arity, Atom};
pub use lattice::{Curvature, Monotonicity, Sign};
pub use shape::Shape;

/// Values of variables, keyed by id.
pub type Assignment = BTreeMap<VarId, DMatrix<f64>>;
/// Values of parameters, keyed by id.
pub type ParamValues = BTreeMap<ParamId, DMatrix<f64>>;

static NEXT_NODE: AtomicU64 = AtomicU64::new(1);
static NEXT_VAR: AtomicU64 = AtomicU64::new(1);
static NEXT_PARAM: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: Arc<str>,
    pub shape: Shape,
    pub nonneg: bool,
}

impl Variable {
    pub fn sign(&self) -> Sign {
        if self.nonneg {
            Sign::Nonneg
        } else {
            Sign::Unknown
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub id: ParamId,
    pub name: Arc<str>,
    pub shape: Shape,
    pub sign: Sign,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Variable(Variable),
    Constant(Arc<DMatrix<f64>>),
    Parameter(Parameter),
    Atom(Atom, Vec<Expr>),
}

#[derive(Debug)]
pub struct Node {
    id: u64,
    kind: NodeKind,
    shape: Shape,
    sign: Sign,
    curvature: Curvature,
    vars: Arc<[VarId]>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("{atom}: {reason} (argument shapes: {})", fmt_shapes(.shapes))]
    Shape {
        atom: &'static str,
        shapes: Vec<Shape>,
        reason: String,
    },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("no value for variable `{0}`")]
    MissingVariable(String),
    #[error("no value for parameter `{0}`")]
    MissingParameter(String),
    #[error("value for `{name}` has shape {found}, expected {expected}")]
    ValueShape {
        name: String,
        expected: Shape,
        found: Shape,
    },
}

fn fmt_shapes(shapes: &[Shape]) -> String {
    shapes.iter().map(Shape::to_string).collect::<Vec<_>>().join(", ")
}

/// A shared handle to an expression node.
#[derive(Debug, Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Expr {
    fn from_parts(kind: NodeKind, shape: Shape, sign: Sign, curvature: Curvature, vars: Arc<[VarId]>) -> Expr {
        Expr(Arc::new(Node {
            id: NEXT_NODE.fetch_add(1, Ordering::Relaxed),
            kind,
            shape,
            sign,
            curvature,
            vars,
        }))
    }

    /// A fresh variable. The name must be nonempty; uniqueness is checked when a
    /// problem is assembled.
    pub fn variable(name: &str, shape: impl Into<Shape>, nonneg: bool) -> Result<Expr, ExprError> {
        let shape = shape.into();
        check_leaf("variable", name, shape)?;
        let var = Variable {
            id: VarId(NEXT_VAR.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            shape,
            nonneg,
        };
        let vars: Arc<[VarId]> = Arc::from(vec![var.id]);
        let sign = var.sign();
        Ok(Self::from_parts(
            NodeKind::Variable(var),
            shape,
            sign,
            Curvature::Affine,
            vars,
        ))
    }

    /// A parameter with a declared sign; its value is supplied at evaluation time.
    pub fn parameter(name: &str, shape: impl Into<Shape>, sign: Sign) -> Result<Expr, ExprError> {
        let shape = shape.into();
        check_leaf("parameter", name, shape)?;
        let param = Parameter {
            id: ParamId(NEXT_PARAM.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            shape,
            sign,
        };
        Ok(Self::from_parts(
            NodeKind::Parameter(param),
            shape,
            sign,
            Curvature::Constant,
            Arc::from([]),
        ))
    }

    pub fn constant(value: DMatrix<f64>) -> Result<Expr, ExprError> {
        let shape = Shape::new(value.nrows(), value.ncols());
        if shape.size() == 0 {
            return Err(ExprError::Invalid {
                what: "constant",
                reason: "empty matrix".into(),
            });
        }
        let sign = Sign::of_values(value.iter());
        Ok(Self::from_parts(
            NodeKind::Constant(Arc::new(value)),
            shape,
            sign,
            Curvature::Constant,
            Arc::from([]),
        ))
    }

    pub fn scalar(value: f64) -> Expr {
        Self::constant(DMatrix::from_element(1, 1, value)).expect("1x1 constant")
    }

    /// Apply an atom, checking arity and shapes.
    pub fn apply(atom: Atom, args: Vec<Expr>) -> Result<Expr, ExprError> {
        let shapes: Vec<Shape> = args.iter().map(Expr::shape).collect();
        let shape = atom.shape(&shapes).map_err(|reason| ExprError::Shape {
            atom: atom.name(),
            shapes,
            reason,
        })?;
        Ok(Self::apply_unchecked(atom, args, shape))
    }

    fn apply_unchecked(atom: Atom, args: Vec<Expr>, shape: Shape) -> Expr {
        let signs: Vec<Sign> = args.iter().map(Expr::sign).collect();
        let sign = atom.sign(&signs);
        let curvs: Vec<Curvature> = args.iter().map(Expr::curvature).collect();
        let curvature = compose(atom, &curvs, &signs);
        let vars = merge_vars(&args);
        Self::from_parts(NodeKind::Atom(atom, args), shape, sign, curvature, vars)
    }

    /// Unique node id, stable for the lifetime of the node.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn kind(&self) -> &NodeKind {
        &self.0.kind
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn sign(&self) -> Sign {
        self.0.sign
    }

    /// Curvature with no variables fixed.
    pub fn curvature(&self) -> Curvature {
        self.0.curvature
    }

    /// Sorted ids of the variables appearing in this expression.
    pub fn variables(&self) -> &[VarId] {
        &self.0.vars
    }

    /// True when no variable appears (parameters count as constant).
    pub fn is_constant(&self) -> bool {
        self.0.vars.is_empty()
    }

    pub fn as_variable(&self) -> Option<&Variable> {
        match &self.0.kind {
            NodeKind::Variable(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_parameter(&self) -> Option<&Parameter> {
        match &self.0.kind {
            NodeKind::Parameter(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_constant(&self) -> Option<&DMatrix<f64>> {
        match &self.0.kind {
            NodeKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Expr] {
        match &self.0.kind {
            NodeKind::Atom(_, args) => args,
            _ => &[],
        }
    }

    pub fn atom(&self) -> Option<Atom> {
        match &self.0.kind {
            NodeKind::Atom(atom, _) => Some(*atom),
            _ => None,
        }
    }

    /// Curvature when the variables in `fixed` are treated as parameters.
    pub fn curvature_with(&self, fixed: &BTreeSet<VarId>) -> Curvature {
        if fixed.is_empty() {
            return self.curvature();
        }
        let mut memo = HashMap::new();
        curvature_rec(self, fixed, &mut memo)
    }

    /// Every variable node reachable from this expression, in first-visit order.
    pub fn variable_nodes(&self) -> Vec<Variable> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Some(v) = e.as_variable() {
                if seen.insert(v.id) {
                    out.push(v.clone());
                }
            }
        });
        out
    }

    /// Every parameter node reachable from this expression, in first-visit order.
    pub fn parameter_nodes(&self) -> Vec<Parameter> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Some(p) = e.as_parameter() {
                if seen.insert(p.id) {
                    out.push(p.clone());
                }
            }
        });
        out
    }

    /// Pre-order traversal visiting each shared node once.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            f(&e);
            stack.extend(e.args().iter().rev().cloned());
        }
    }

    /// Rebuild the DAG with some nodes replaced. `f` returns a replacement of the
    /// same shape or `None` to recurse. Shared subgraphs stay shared.
    pub fn substitute(&self, f: &mut dyn FnMut(&Expr) -> Option<Expr>) -> Expr {
        let mut memo = HashMap::new();
        substitute_rec(self, f, &mut memo)
    }

    pub fn add(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::Add, vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::Add, vec![self.clone(), other.neg()])
    }

    pub fn neg(&self) -> Expr {
        Self::apply_unchecked(Atom::Negate, vec![self.clone()], self.shape())
    }

    pub fn scale(&self, c: f64) -> Expr {
        Self::apply_unchecked(Atom::Scale(c), vec![self.clone()], self.shape())
    }

    pub fn matmul(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::MatMul, vec![self.clone(), other.clone()])
    }

    pub fn multiply(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::Multiply, vec![self.clone(), other.clone()])
    }

    pub fn sum(&self) -> Expr {
        Self::apply_unchecked(Atom::Sum, vec![self.clone()], Shape::SCALAR)
    }

    pub fn sum_axis(&self, axis: u8) -> Result<Expr, ExprError> {
        Self::apply(Atom::SumAxis(axis), vec![self.clone()])
    }

    pub fn sum_squares(&self) -> Expr {
        Self::apply_unchecked(Atom::SumSquares, vec![self.clone()], Shape::SCALAR)
    }

    pub fn square(&self) -> Expr {
        Self::apply_unchecked(Atom::Square, vec![self.clone()], self.shape())
    }

    pub fn abs(&self) -> Expr {
        Self::apply_unchecked(Atom::Abs, vec![self.clone()], self.shape())
    }

    pub fn norm1(&self) -> Expr {
        Self::apply_unchecked(Atom::Norm1, vec![self.clone()], Shape::SCALAR)
    }

    pub fn norm2(&self) -> Expr {
        Self::apply_unchecked(Atom::Norm2, vec![self.clone()], Shape::SCALAR)
    }

    pub fn norm_inf(&self) -> Expr {
        Self::apply_unchecked(Atom::NormInf, vec![self.clone()], Shape::SCALAR)
    }

    pub fn maximum(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::Maximum, vec![self.clone(), other.clone()])
    }

    pub fn trace(&self) -> Result<Expr, ExprError> {
        Self::apply(Atom::Trace, vec![self.clone()])
    }

    pub fn diff(&self) -> Result<Expr, ExprError> {
        Self::apply(Atom::Diff, vec![self.clone()])
    }

    pub fn t(&self) -> Expr {
        Self::apply_unchecked(Atom::Transpose, vec![self.clone()], self.shape().transpose())
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Expr, ExprError> {
        Self::apply(Atom::Reshape(shape.into()), vec![self.clone()])
    }

    pub fn convolve(&self, other: &Expr) -> Result<Expr, ExprError> {
        Self::apply(Atom::Convolve, vec![self.clone(), other.clone()])
    }

    pub fn vstack(items: &[Expr]) -> Result<Expr, ExprError> {
        Self::apply(Atom::VStack, items.to_vec())
    }

    pub fn hstack(items: &[Expr]) -> Result<Expr, ExprError> {
        Self::apply(Atom::HStack, items.to_vec())
    }
}

fn check_leaf(what: &'static str, name: &str, shape: Shape) -> Result<(), ExprError> {
    if name.is_empty() {
        return Err(ExprError::Invalid {
            what,
            reason: "empty name".into(),
        });
    }
    if shape.rows == 0 || shape.cols == 0 {
        return Err(ExprError::Invalid {
            what,
            reason: format!("`{name}` has empty shape {shape}"),
        });
    }
    Ok(())
}

fn merge_vars(args: &[Expr]) -> Arc<[VarId]> {
    match args {
        [] => Arc::from([]),
        [only] => only.0.vars.clone(),
        _ => {
            let set: BTreeSet<VarId> = args.iter().flat_map(|a| a.variables().iter().copied()).collect();
            set.into_iter().collect()
        }
    }
}

/// DCP composition rule for one atom application.
fn compose(atom: Atom, curvs: &[Curvature], signs: &[Sign]) -> Curvature {
    if curvs.iter().all(|c| c.is_constant()) {
        return Curvature::Constant;
    }
    if atom.is_product() {
        let (lc, rc) = (curvs[0], curvs[1]);
        return match (lc.is_constant(), rc.is_constant()) {
            (true, _) => rc.scale(signs[0]),
            (_, true) => lc.scale(signs[1]),
            // both sides vary: outside DCP, left to the biconvex product rule
            _ => Curvature::Unknown,
        };
    }
    let base = atom.curvature();
    let all_affine = curvs.iter().all(|c| c.is_affine());
    if base.is_affine() && all_affine {
        return Curvature::Affine;
    }
    let arg_ok = |i: usize, convex: bool| {
        let c = curvs[i];
        if c.is_affine() {
            return true;
        }
        let m = atom.monotonicity(i).resolve(signs[i]);
        let (up, down) = if convex {
            (Curvature::Convex, Curvature::Concave)
        } else {
            (Curvature::Concave, Curvature::Convex)
        };
        (c == up && m == Monotonicity::Nondecreasing) || (c == down && m == Monotonicity::Nonincreasing)
    };
    if base.is_convex() && (0..curvs.len()).all(|i| arg_ok(i, true)) {
        Curvature::Convex
    } else if base.is_concave() && (0..curvs.len()).all(|i| arg_ok(i, false)) {
        Curvature::Concave
    } else {
        Curvature::Unknown
    }
}

fn curvature_rec(e: &Expr, fixed: &BTreeSet<VarId>, memo: &mut HashMap<u64, Curvature>) -> Curvature {
    if e.variables().iter().all(|v| !fixed.contains(v)) {
        return e.curvature();
    }
    if let Some(&c) = memo.get(&e.id()) {
        return c;
    }
    let c = match e.kind() {
        NodeKind::Variable(_) => Curvature::Constant,
        NodeKind::Constant(_) | NodeKind::Parameter(_) => Curvature::Constant,
        NodeKind::Atom(atom, args) => {
            let curvs: Vec<Curvature> = args.iter().map(|a| curvature_rec(a, fixed, memo)).collect();
            let signs: Vec<Sign> = args.iter().map(Expr::sign).collect();
            compose(*atom, &curvs, &signs)
        }
    };
    memo.insert(e.id(), c);
    c
}

fn substitute_rec(e: &Expr, f: &mut dyn FnMut(&Expr) -> Option<Expr>, memo: &mut HashMap<u64, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.id()) {
        return done.clone();
    }
    let out = if let Some(replacement) = f(e) {
        debug_assert_eq!(replacement.shape(), e.shape());
        replacement
    } else if let NodeKind::Atom(atom, args) = e.kind() {
        let new_args: Vec<Expr> = args.iter().map(|a| substitute_rec(a, f, memo)).collect();
        if new_args.iter().zip(args).all(|(a, b)| a == b) {
            e.clone()
        } else {
            Expr::apply_unchecked(*atom, new_args, e.shape())
        }
    } else {
        e.clone()
    };
    memo.insert(e.id(), out.clone());
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            NodeKind::Variable(v) => f.write_str(&v.name),
            NodeKind::Parameter(p) => f.write_str(&p.name),
            NodeKind::Constant(c) if c.len() == 1 => write!(f, "{}", c[(0, 0)]),
            NodeKind::Constant(c) => write!(f, "const({}x{})", c.nrows(), c.ncols()),
            NodeKind::Atom(atom, args) => match atom {
                Atom::Add => {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        match (i, a.kind()) {
                            (0, _) => write!(f, "{a}")?,
                            (_, NodeKind::Atom(Atom::Negate, inner)) => write!(f, " - {}", inner[0])?,
                            _ => write!(f, " + {a}")?,
                        }
                    }
                    write!(f, ")")
                }
                Atom::Negate => write!(f, "-{}", args[0]),
                Atom::Scale(c) => write!(f, "{c} * {}", args[0]),
                Atom::MatMul => write!(f, "{} @ {}", args[0], args[1]),
                Atom::Multiply => write!(f, "{} * {}", args[0], args[1]),
                Atom::SumAxis(axis) => write!(f, "sum({}, {axis})", args[0]),
                Atom::Reshape(s) => write!(f, "reshape({}, {}, {})", args[0], s.rows, s.cols),
                _ => {
                    write!(f, "{}(", atom.name())?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")
                }
            },
        }
    }
}
