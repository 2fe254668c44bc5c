//! Lowering of convex subproblems to standard-form cone programs.
//!
//! Affine expressions flatten to sparse rows. Each nonlinear atom introduces
//! auxiliary columns and cone rows (its graph implementation). Squares that
//! reach the objective through nonnegative combinations become diagonal
//! quadratic terms on alias columns instead of cones.

mod block;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::conesolver::sparse::from_triplets;
use crate::conesolver::{Cone, ConeProgram, ConeSolution};
use crate::expr::{Assignment, Atom, Expr, ExprError, NodeKind, Shape, Sign, VarId};
use crate::problem::{ConstraintKind, Sense};
use crate::transform::ConvexSubproblem;

use block::{Block, Bound, Entry};

/// Absolute tolerance for constraints whose left side folds to a constant.
const CONSTANT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonError {
    #[error("{location}: {reason}")]
    NotDcp { location: String, reason: String },
    #[error("{location}: constant constraint violated by {violation:e}")]
    InfeasibleConstant { location: String, violation: f64 },
    #[error("variable `{0}` is neither active nor fixed")]
    UnexpectedVariable(String),
    #[error("solution has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// An auxiliary column that bounds one entry of an atom.
#[derive(Debug, Clone)]
pub struct Epigraph {
    pub col: usize,
    pub atom: Expr,
    /// Column-major entry of the atom's value.
    pub entry: usize,
}

/// Where the original variables live in the stacked solution vector.
#[derive(Debug, Clone)]
pub struct Recovery {
    /// `(variable, first column, shape, nonneg attribute)`.
    pub variables: Vec<(VarId, usize, Shape, bool)>,
    pub epigraphs: Vec<Epigraph>,
    /// Constant added to the cone program objective.
    pub offset: f64,
    /// The subproblem maximizes; the cone program minimizes the negation.
    pub negate: bool,
    pub num_cols: usize,
}

impl Recovery {
    pub fn column(&self, id: VarId) -> Option<usize> {
        self.variables.iter().find(|v| v.0 == id).map(|v| v.1)
    }

    /// Column vector holding the values of `point` for the recovered
    /// variables and zero elsewhere.
    pub fn warm_start(&self, point: &Assignment) -> DVector<f64> {
        let mut x = DVector::zeros(self.num_cols);
        for &(id, col, shape, _) in &self.variables {
            if let Some(v) = point.get(&id).filter(|v| v.shape() == (shape.rows, shape.cols)) {
                x.rows_mut(col, shape.size()).copy_from_slice(v.as_slice());
            }
        }
        x
    }
}

/// Lower a convex subproblem. Only active variables that appear get columns.
pub fn canonicalize(sp: &ConvexSubproblem) -> Result<(ConeProgram, Recovery), CanonError> {
    check_dcp(sp)?;
    let mut lw = Lowerer::default();

    let mut seen = BTreeMap::new();
    for root in std::iter::once(&sp.objective).chain(sp.constraints.iter().map(|c| &c.left)) {
        root.visit(&mut |e| {
            if let Some(v) = e.as_variable() {
                seen.insert(v.id, v.clone());
            }
        });
    }
    let mut variables = Vec::new();
    for (id, v) in &seen {
        if !sp.active.contains_key(id) {
            return Err(CanonError::UnexpectedVariable(v.name.to_string()));
        }
        let col = lw.aux(v.shape.size());
        lw.var_cols.insert(*id, col);
        variables.push((*id, col, v.shape, v.nonneg));
        if v.nonneg {
            for k in 0..v.shape.size() {
                lw.nonneg.push(Entry::column(col + k, -1.0));
            }
        }
    }

    for (i, c) in sp.constraints.iter().enumerate() {
        lw.location = format!("constraint.{i}");
        if c.left.variables().is_empty() {
            check_constant(
                &lw.location,
                c.kind,
                &c.left.eval(&Assignment::new(), &Default::default())?,
            )?;
            continue;
        }
        let b = lw.lower(&c.left)?;
        match c.kind {
            ConstraintKind::Equality | ConstraintKind::Cone(Cone::Zero(_)) => {
                let rows = lw.linearize(b, None)?;
                lw.zero.extend(rows);
            }
            ConstraintKind::Cone(Cone::Nonneg(_)) => {
                let rows = lw.linearize(b, Some(Bound::Upper))?;
                lw.nonneg.extend(rows);
            }
            ConstraintKind::Cone(Cone::Soc(_)) => {
                let rows = lw.linearize(b, None)?;
                lw.soc.push(rows);
            }
            ConstraintKind::Cone(Cone::Psd(q)) => {
                let rows = lw.linearize(b, None)?;
                lw.psd.push((q, rows));
            }
        }
    }

    lw.location = "objective".into();
    let negate = sp.sense == Sense::Maximize;
    let objective = if negate {
        sp.objective.neg()
    } else {
        sp.objective.clone()
    };
    let root = lw.lower(&objective)?;
    if root.bound == Bound::Lower {
        return Err(lw.not_dcp("objective is not convex after lowering"));
    }
    let mut root = root.e.into_iter().next().expect("scalar objective");
    root.normalize();

    // Squares at the root: r_k = a_k on a new column with P_kk = 2 w_k.
    let mut p_diag: BTreeMap<usize, f64> = BTreeMap::new();
    let mut alias_cols: HashMap<usize, usize> = HashMap::new();
    for &(alias, w) in &root.quad {
        if w < 0.0 {
            return Err(lw.not_dcp("negative square term in the objective"));
        }
        let col = match alias_cols.get(&alias) {
            Some(c) => *c,
            None => {
                let col = lw.aux(1);
                let mut row = Entry::column(col, 1.0);
                row.axpy(-1.0, &lw.aliases[alias].clone());
                row.normalize();
                lw.zero.push(row);
                alias_cols.insert(alias, col);
                col
            }
        };
        *p_diag.entry(col).or_insert(0.0) += 2.0 * w;
    }

    let n = lw.next_col;
    let mut c = DVector::zeros(n);
    for &(j, v) in &root.lin {
        c[j] += v;
    }
    let p = if p_diag.is_empty() {
        None
    } else {
        let trips: Vec<_> = p_diag.iter().map(|(&j, &v)| (j, j, v)).collect();
        Some(from_triplets(n, n, &trips))
    };

    let mut cones = Vec::new();
    let mut rows: Vec<Entry> = Vec::new();
    if !lw.zero.is_empty() {
        cones.push(Cone::Zero(lw.zero.len()));
        rows.append(&mut lw.zero);
    }
    if !lw.nonneg.is_empty() {
        cones.push(Cone::Nonneg(lw.nonneg.len()));
        rows.append(&mut lw.nonneg);
    }
    for block in lw.soc.drain(..) {
        cones.push(Cone::Soc(block.len()));
        rows.extend(block);
    }
    for (q, block) in lw.psd.drain(..) {
        cones.push(Cone::Psd(q));
        rows.extend(block);
    }
    let mut trips = Vec::new();
    let mut b = DVector::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        debug_assert!(row.is_affine());
        for &(j, v) in &row.lin {
            trips.push((i, j, v));
        }
        b[i] = -row.c;
    }
    let a = from_triplets(rows.len(), n, &trips);
    let cp = ConeProgram {
        p,
        c,
        a,
        b,
        cones,
        warm_start: None,
    };
    let recovery = Recovery {
        variables,
        epigraphs: lw.epigraphs,
        offset: root.c,
        negate,
        num_cols: n,
    };
    Ok((cp, recovery))
}

/// Split a cone solution into variable values and the subproblem objective.
/// Nonnegative variables are clipped at zero.
pub fn recover(r: &Recovery, sol: &ConeSolution) -> Result<(Assignment, f64), CanonError> {
    if sol.x.len() != r.num_cols {
        return Err(CanonError::Dimension {
            expected: r.num_cols,
            found: sol.x.len(),
        });
    }
    let mut out = Assignment::new();
    for &(id, col, shape, nonneg) in &r.variables {
        let slice = &sol.x.as_slice()[col..col + shape.size()];
        let mut m = DMatrix::from_column_slice(shape.rows, shape.cols, slice);
        if nonneg {
            m.apply(|v| *v = v.max(0.0));
        }
        out.insert(id, m);
    }
    let value = sol.objective + r.offset;
    Ok((out, if r.negate { -value } else { value }))
}

fn check_dcp(sp: &ConvexSubproblem) -> Result<(), CanonError> {
    let curv = sp.objective.curvature();
    let ok = match sp.sense {
        Sense::Minimize => curv.is_convex(),
        Sense::Maximize => curv.is_concave(),
    };
    if !ok {
        return Err(CanonError::NotDcp {
            location: "objective".into(),
            reason: format!("{curv} objective cannot be {}d", sp.sense),
        });
    }
    for (i, c) in sp.constraints.iter().enumerate() {
        let curv = c.left.curvature();
        let ok = match c.kind {
            ConstraintKind::Cone(Cone::Nonneg(_)) => curv.is_convex(),
            _ => curv.is_affine(),
        };
        if !ok {
            return Err(CanonError::NotDcp {
                location: format!("constraint.{i}"),
                reason: format!("{curv} left side in {}", c.kind),
            });
        }
    }
    Ok(())
}

fn check_constant(location: &str, kind: ConstraintKind, v: &DMatrix<f64>) -> Result<(), CanonError> {
    let violation = match kind {
        ConstraintKind::Equality | ConstraintKind::Cone(Cone::Zero(_)) => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        ConstraintKind::Cone(cone) => crate::transform::scalarized_violation(cone, v).max(0.0),
    };
    let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if violation > CONSTANT_TOL * scale {
        return Err(CanonError::InfeasibleConstant {
            location: location.to_string(),
            violation,
        });
    }
    Ok(())
}

fn direction(sign: Sign) -> Option<Bound> {
    if sign.is_nonneg() {
        Some(Bound::Upper)
    } else if sign.is_nonpos() {
        Some(Bound::Lower)
    } else {
        None
    }
}

#[derive(Default)]
struct Lowerer {
    var_cols: BTreeMap<VarId, usize>,
    next_col: usize,
    /// Affine entries referenced by square terms.
    aliases: Vec<Entry>,
    /// Column `q` with `q >= a^2`, per alias.
    squares: HashMap<usize, usize>,
    zero: Vec<Entry>,
    nonneg: Vec<Entry>,
    soc: Vec<Vec<Entry>>,
    psd: Vec<(usize, Vec<Entry>)>,
    memo: HashMap<u64, Block>,
    epigraphs: Vec<Epigraph>,
    location: String,
}

impl Lowerer {
    fn aux(&mut self, count: usize) -> usize {
        let start = self.next_col;
        self.next_col += count;
        start
    }

    fn not_dcp(&self, reason: impl Into<String>) -> CanonError {
        CanonError::NotDcp {
            location: self.location.clone(),
            reason: reason.into(),
        }
    }

    fn alias(&mut self, e: Entry) -> usize {
        self.aliases.push(e);
        self.aliases.len() - 1
    }

    /// Column bounded below by the square of an alias, via the rotated cone
    /// `(1 + q, 1 - q, 2a)` in soc(3).
    fn square_col(&mut self, alias: usize) -> usize {
        if let Some(q) = self.squares.get(&alias) {
            return *q;
        }
        let q = self.aux(1);
        let a = self.aliases[alias].clone();
        let mut first = Entry::constant(-1.0);
        first.lin.push((q, -1.0));
        let mut second = Entry::constant(-1.0);
        second.lin.push((q, 1.0));
        self.soc.push(vec![first, second, a.scaled(-2.0)]);
        self.squares.insert(alias, q);
        q
    }

    /// Make every entry affine. `dir` is the admissible bound direction, or
    /// `None` when the block must already be exact and affine.
    fn linearize(&mut self, b: Block, dir: Option<Bound>) -> Result<Vec<Entry>, CanonError> {
        if b.is_affine() {
            return Ok(b.e);
        }
        let Some(dir) = dir else {
            return Err(self.not_dcp("expected an affine expression"));
        };
        if b.bound.join(dir) != Some(dir) {
            return Err(self.not_dcp("expression bound points the wrong way"));
        }
        let mut out = Vec::with_capacity(b.e.len());
        for mut e in b.e {
            for (alias, w) in std::mem::take(&mut e.quad) {
                let admissible = match dir {
                    Bound::Upper => w > 0.0,
                    _ => w < 0.0,
                };
                if !admissible {
                    return Err(self.not_dcp("square term with the wrong sign"));
                }
                let q = self.square_col(alias);
                e.lin.push((q, w));
            }
            e.normalize();
            out.push(e);
        }
        Ok(out)
    }

    /// Affine entries for the argument of a sign-dependent atom, with a flag
    /// telling whether they equal the argument exactly.
    fn linearize_arg(&mut self, arg: &Expr) -> Result<(Vec<Entry>, bool), CanonError> {
        let b = self.lower(arg)?;
        if b.is_affine() {
            return Ok((b.e, true));
        }
        let rows = self.linearize(b, direction(arg.sign()))?;
        Ok((rows, false))
    }

    fn lower(&mut self, e: &Expr) -> Result<Block, CanonError> {
        if let Some(b) = self.memo.get(&e.id()) {
            return Ok(b.clone());
        }
        let b = self.lower_node(e)?;
        self.memo.insert(e.id(), b.clone());
        Ok(b)
    }

    fn constant_block(m: &DMatrix<f64>) -> Block {
        let shape = Shape::new(m.nrows(), m.ncols());
        Block::new(shape, Bound::Exact, m.iter().map(|&v| Entry::constant(v)).collect())
    }

    fn fold(e: &Expr) -> Result<Option<DMatrix<f64>>, CanonError> {
        if e.variables().is_empty() {
            Ok(Some(e.eval(&Assignment::new(), &Default::default())?))
        } else {
            Ok(None)
        }
    }

    fn lower_node(&mut self, e: &Expr) -> Result<Block, CanonError> {
        let shape = e.shape();
        match e.kind() {
            NodeKind::Constant(m) => return Ok(Self::constant_block(m)),
            NodeKind::Variable(v) => {
                let col = *self
                    .var_cols
                    .get(&v.id)
                    .ok_or_else(|| CanonError::UnexpectedVariable(v.name.to_string()))?;
                let entries = (0..shape.size()).map(|k| Entry::column(col + k, 1.0)).collect();
                return Ok(Block::new(shape, Bound::Exact, entries));
            }
            NodeKind::Parameter(_) | NodeKind::Atom(..) => {}
        }
        if let Some(m) = Self::fold(e)? {
            return Ok(Self::constant_block(&m));
        }
        let NodeKind::Atom(atom, args) = e.kind() else {
            unreachable!("parameters fold to constants")
        };
        let atom = *atom;
        match atom {
            Atom::Add => {
                let blocks = args.iter().map(|a| self.lower(a)).collect::<Result<Vec<_>, _>>()?;
                let bound = self.join_all(blocks.iter().map(|b| b.bound))?;
                let entries = grid(shape, |i, j| {
                    Entry::combination(blocks.iter().map(|b| (1.0, b.at(i, j))))
                });
                Ok(Block::new(shape, bound, entries))
            }
            Atom::Negate => Ok(Self::scaled(self.lower(&args[0])?, -1.0)),
            Atom::Scale(k) => Ok(Self::scaled(self.lower(&args[0])?, k)),
            Atom::Multiply => {
                let (k, b) = self.split_constant(&args[0], &args[1])?;
                let bound = b
                    .bound
                    .through(k.iter().copied())
                    .ok_or_else(|| self.not_dcp("mixed-sign scaling"))?;
                let entries = grid(shape, |i, j| b.at(i, j).scaled(*broadcast_at(&k, i, j)));
                Ok(Block::new(shape, bound, entries))
            }
            Atom::MatMul => {
                if let Some(k) = Self::fold(&args[0])? {
                    let b = self.lower(&args[1])?;
                    let bound = b
                        .bound
                        .through(k.iter().copied())
                        .ok_or_else(|| self.not_dcp("mixed-sign product"))?;
                    let entries = grid(shape, |i, j| {
                        Entry::combination((0..k.ncols()).map(|l| (k[(i, l)], b.at(l, j))))
                    });
                    Ok(Block::new(shape, bound, entries))
                } else if let Some(k) = Self::fold(&args[1])? {
                    let b = self.lower(&args[0])?;
                    let bound = b
                        .bound
                        .through(k.iter().copied())
                        .ok_or_else(|| self.not_dcp("mixed-sign product"))?;
                    let entries = grid(shape, |i, j| {
                        Entry::combination((0..k.nrows()).map(|l| (k[(l, j)], b.at(i, l))))
                    });
                    Ok(Block::new(shape, bound, entries))
                } else {
                    Err(self.not_dcp("product of two non-constant operands"))
                }
            }
            Atom::Convolve => {
                let (k, b) = self.split_constant(&args[0], &args[1])?;
                let bound = b
                    .bound
                    .through(k.iter().copied())
                    .ok_or_else(|| self.not_dcp("mixed-sign convolution"))?;
                let mut entries = vec![Entry::default(); shape.rows];
                for (i, &ki) in k.iter().enumerate() {
                    for (j, bj) in b.e.iter().enumerate() {
                        entries[i + j].axpy(ki, bj);
                    }
                }
                entries.iter_mut().for_each(Entry::normalize);
                Ok(Block::new(shape, bound, entries))
            }
            Atom::Sum => {
                let b = self.lower(&args[0])?;
                let entry = Entry::combination(b.e.iter().map(|x| (1.0, x)));
                Ok(Block::new(shape, b.bound, vec![entry]))
            }
            Atom::SumAxis(axis) => {
                let b = self.lower(&args[0])?;
                let s = b.shape;
                let entries = if axis == 0 {
                    (0..s.cols)
                        .map(|j| Entry::combination((0..s.rows).map(|i| (1.0, b.at(i, j)))))
                        .collect()
                } else {
                    (0..s.rows)
                        .map(|i| Entry::combination((0..s.cols).map(|j| (1.0, b.at(i, j)))))
                        .collect()
                };
                Ok(Block::new(shape, b.bound, entries))
            }
            Atom::Trace => {
                let b = self.lower(&args[0])?;
                let entry = Entry::combination((0..b.shape.rows).map(|i| (1.0, b.at(i, i))));
                Ok(Block::new(shape, b.bound, vec![entry]))
            }
            Atom::Diff => {
                let b = self.lower(&args[0])?;
                if b.bound != Bound::Exact {
                    return Err(self.not_dcp("difference of a non-affine expression"));
                }
                let entries = (0..shape.rows)
                    .map(|i| Entry::combination([(1.0, &b.e[i]), (-1.0, &b.e[i + 1])]))
                    .collect();
                Ok(Block::new(shape, Bound::Exact, entries))
            }
            Atom::Transpose => {
                let b = self.lower(&args[0])?;
                let entries = grid(shape, |i, j| b.at(j, i).clone());
                Ok(Block::new(shape, b.bound, entries))
            }
            Atom::Reshape(_) => {
                let b = self.lower(&args[0])?;
                Ok(Block::new(shape, b.bound, b.e))
            }
            Atom::VStack | Atom::HStack => {
                let blocks = args.iter().map(|a| self.lower(a)).collect::<Result<Vec<_>, _>>()?;
                let bound = self.join_all(blocks.iter().map(|b| b.bound))?;
                let mut m: Vec<Entry> = vec![Entry::default(); shape.size()];
                let mut offset = 0;
                for b in &blocks {
                    for j in 0..b.shape.cols {
                        for i in 0..b.shape.rows {
                            let (r, c) = if atom == Atom::VStack {
                                (offset + i, j)
                            } else {
                                (i, offset + j)
                            };
                            m[r + c * shape.rows] = b.at(i, j).clone();
                        }
                    }
                    offset += if atom == Atom::VStack {
                        b.shape.rows
                    } else {
                        b.shape.cols
                    };
                }
                Ok(Block::new(shape, bound, m))
            }
            Atom::SumSquares | Atom::Square => {
                let (rows, exact) = self.linearize_arg(&args[0])?;
                let bound = if exact { Bound::Exact } else { Bound::Upper };
                let squares: Vec<Entry> = rows.into_iter().map(|r| self.square_of(r)).collect();
                if atom == Atom::Square {
                    Ok(Block::new(shape, bound, squares))
                } else {
                    let entry = Entry::combination(squares.iter().map(|x| (1.0, x)));
                    Ok(Block::new(shape, bound, vec![entry]))
                }
            }
            Atom::Abs | Atom::Norm1 => {
                let abs = self.abs_of(e, &args[0])?;
                if atom == Atom::Abs {
                    return Ok(abs);
                }
                let entry = Entry::combination(abs.e.iter().map(|x| (1.0, x)));
                Ok(Block::new(shape, abs.bound, vec![entry]))
            }
            Atom::Norm2 => {
                let (rows, _) = self.linearize_arg(&args[0])?;
                let tau = self.epigraph(e, 0);
                let mut cone = vec![Entry::column(tau, -1.0)];
                cone.extend(rows.iter().map(|r| r.scaled(-1.0)));
                self.soc.push(cone);
                Ok(Block::new(shape, Bound::Upper, vec![Entry::column(tau, 1.0)]))
            }
            Atom::NormInf => {
                let (rows, _) = self.linearize_arg(&args[0])?;
                let tau = self.epigraph(e, 0);
                for r in &rows {
                    for k in [1.0, -1.0] {
                        let mut row = r.scaled(k);
                        row.lin.push((tau, -1.0));
                        row.normalize();
                        self.nonneg.push(row);
                    }
                }
                Ok(Block::new(shape, Bound::Upper, vec![Entry::column(tau, 1.0)]))
            }
            Atom::Maximum => {
                let a = self.lower(&args[0])?;
                let a = Block::new(a.shape, Bound::Upper, self.linearize(a, Some(Bound::Upper))?);
                let b = self.lower(&args[1])?;
                let b = Block::new(b.shape, Bound::Upper, self.linearize(b, Some(Bound::Upper))?);
                let mut entries = Vec::with_capacity(shape.size());
                for j in 0..shape.cols {
                    for i in 0..shape.rows {
                        let tau = self.epigraph(e, i + j * shape.rows);
                        for side in [a.at(i, j), b.at(i, j)] {
                            let mut row = side.clone();
                            row.lin.push((tau, -1.0));
                            row.normalize();
                            self.nonneg.push(row);
                        }
                        entries.push(Entry::column(tau, 1.0));
                    }
                }
                Ok(Block::new(shape, Bound::Upper, entries))
            }
        }
    }

    fn epigraph(&mut self, atom: &Expr, entry: usize) -> usize {
        let col = self.aux(1);
        self.epigraphs.push(Epigraph {
            col,
            atom: atom.clone(),
            entry,
        });
        col
    }

    fn square_of(&mut self, r: Entry) -> Entry {
        if r.is_constant() {
            return Entry::constant(r.c * r.c);
        }
        let alias = self.alias(r);
        Entry {
            quad: vec![(alias, 1.0)],
            ..Entry::default()
        }
    }

    fn abs_of(&mut self, e: &Expr, arg: &Expr) -> Result<Block, CanonError> {
        let sign = arg.sign();
        if sign.is_nonneg() {
            return self.lower(arg);
        }
        if sign.is_nonpos() {
            let b = self.lower(arg)?;
            return Ok(Self::scaled(b, -1.0));
        }
        let b = self.lower(arg)?;
        let shape = b.shape;
        let rows = self.linearize(b, None)?;
        let mut entries = Vec::with_capacity(rows.len());
        for (k, r) in rows.iter().enumerate() {
            let u = if e.atom() == Some(Atom::Abs) {
                self.epigraph(e, k)
            } else {
                self.aux(1)
            };
            for s in [1.0, -1.0] {
                let mut row = r.scaled(s);
                row.lin.push((u, -1.0));
                row.normalize();
                self.nonneg.push(row);
            }
            entries.push(Entry::column(u, 1.0));
        }
        Ok(Block::new(shape, Bound::Upper, entries))
    }

    fn scaled(b: Block, k: f64) -> Block {
        let bound = if k < 0.0 { b.bound.flip() } else { b.bound };
        let e = b.e.iter().map(|x| x.scaled(k)).collect();
        Block::new(b.shape, bound, e)
    }

    fn join_all(&self, bounds: impl Iterator<Item = Bound>) -> Result<Bound, CanonError> {
        let mut out = Bound::Exact;
        for b in bounds {
            out = out
                .join(b)
                .ok_or_else(|| self.not_dcp("sum of convex and concave parts"))?;
        }
        Ok(out)
    }

    /// One constant operand and one lowered operand, in either order.
    fn split_constant(&mut self, a: &Expr, b: &Expr) -> Result<(DMatrix<f64>, Block), CanonError> {
        if let Some(k) = Self::fold(a)? {
            Ok((k, self.lower(b)?))
        } else if let Some(k) = Self::fold(b)? {
            Ok((k, self.lower(a)?))
        } else {
            Err(self.not_dcp("product of two non-constant operands"))
        }
    }
}

fn broadcast_at(m: &DMatrix<f64>, i: usize, j: usize) -> &f64 {
    if m.len() == 1 {
        &m[(0, 0)]
    } else {
        &m[(i, j)]
    }
}

/// Column-major grid of entries.
fn grid(shape: Shape, mut f: impl FnMut(usize, usize) -> Entry) -> Vec<Entry> {
    let mut out = Vec::with_capacity(shape.size());
    for j in 0..shape.cols {
        for i in 0..shape.rows {
            out.push(f(i, j));
        }
    }
    out
}

#[cfg(test)]
mod tests;
