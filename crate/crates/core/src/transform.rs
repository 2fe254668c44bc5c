//! Block fixing, proximal terms and slack relaxations.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::conesolver::Cone;
use crate::expr::{Assignment, Expr, ExprError, VarId, Variable};
use crate::problem::{new_problem, BiconvexProblem, Constraint, ConstraintKind, ProblemError, Sense};
use crate::verify::Block;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("no value for variable `{0}`")]
    MissingValue(String),
    #[error("no value for parameter `{0}`")]
    MissingParameter(String),
    #[error("no anchor value for variable `{0}`")]
    MissingAnchor(String),
    #[error("proximal weight must be nonnegative, got {0}")]
    NegativeWeight(f64),
    #[error("penalty must be positive, got {0}")]
    NonpositivePenalty(f64),
    #[error("the zero cone has no interior; equalities are relaxed with t-slacks")]
    ZeroCone,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// A problem in one block, with the other block and all parameters replaced
/// by constants.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub sense: Sense,
    pub objective: Expr,
    pub constraints: Vec<Constraint>,
    /// Variables optimized here: the active block plus free variables.
    pub active: BTreeMap<VarId, Variable>,
    pub block: Block,
    pub lbd: f64,
}

/// Fix the inactive block at `fixed_values` and add `lbd * ||v - anchor(v)||^2`
/// for every variable `v` of the active block (subtracted when maximizing).
pub fn fix_block(
    p: &BiconvexProblem,
    active: Block,
    fixed_values: &Assignment,
    lbd: f64,
    anchor: &Assignment,
) -> Result<ConvexSubproblem, TransformError> {
    if !(lbd >= 0.0) {
        return Err(TransformError::NegativeWeight(lbd));
    }
    let inactive = p.partition().block(active.other());
    let mut replacements: BTreeMap<u64, Expr> = BTreeMap::new();
    for id in inactive {
        let v = p.variable(*id).expect("partition ids belong to the problem");
        let value = fixed_values
            .get(id)
            .ok_or_else(|| TransformError::MissingValue(v.name.to_string()))?;
        let node = p.variable_expr(*id).expect("variable node");
        replacements.insert(node.id(), Expr::constant(value.clone())?);
    }
    for node in p.parameter_exprs() {
        let param = node.as_parameter().expect("parameter node");
        let value = p
            .param_values()
            .get(&param.id)
            .ok_or_else(|| TransformError::MissingParameter(param.name.to_string()))?;
        replacements.insert(node.id(), Expr::constant(value.clone())?);
    }
    let mut subst = |e: &Expr| replacements.get(&e.id()).cloned();
    let mut objective = p.objective().substitute(&mut subst);
    let constraints = p
        .constraints()
        .iter()
        .map(|c| Constraint {
            kind: c.kind,
            left: c.left.substitute(&mut subst),
        })
        .collect();

    let block_vars = p.partition().block(active);
    if lbd > 0.0 {
        for id in block_vars {
            let v = p.variable(*id).expect("partition ids belong to the problem");
            let a = anchor
                .get(id)
                .ok_or_else(|| TransformError::MissingAnchor(v.name.to_string()))?;
            let node = p.variable_expr(*id).expect("variable node");
            let term = node.sub(&Expr::constant(a.clone())?)?.sum_squares().scale(lbd);
            objective = match p.sense() {
                Sense::Minimize => objective.add(&term)?,
                Sense::Maximize => objective.sub(&term)?,
            };
        }
    }

    let active_vars = p
        .variables()
        .filter(|v| block_vars.contains(&v.id) || p.partition().free.contains(&v.id))
        .map(|v| (v.id, v.clone()))
        .collect();
    Ok(ConvexSubproblem {
        sense: p.sense(),
        objective,
        constraints,
        active: active_vars,
        block: active,
        lbd,
    })
}

/// Interior direction `e_K` used to relax a cone constraint: all ones for the
/// nonnegative orthant, `(1, 0, ..., 0)` for a second-order cone stored
/// t-first, the identity for the semidefinite cone.
pub fn cone_unit(cone: Cone) -> Result<DMatrix<f64>, TransformError> {
    match cone {
        Cone::Nonneg(q) => Ok(DMatrix::from_element(q, 1, 1.0)),
        Cone::Soc(q) => {
            let mut e = DMatrix::zeros(q, 1);
            if q > 0 {
                e[(0, 0)] = 1.0;
            }
            Ok(e)
        }
        Cone::Psd(q) => Ok(DMatrix::identity(q, q)),
        Cone::Zero(_) => Err(TransformError::ZeroCone),
    }
}

/// Slack bookkeeping for a relaxed problem.
#[derive(Debug, Clone)]
pub struct SlackInfo {
    /// `(constraint index, slack variable)` for each cone inequality. Each
    /// slack is a nonnegative scalar.
    pub s: Vec<(usize, Expr)>,
    /// `(constraint index, slack variable)` for each equality. Each slack has
    /// the shape of the equality residual, one scalar per component.
    pub t: Vec<(usize, Expr)>,
    /// `1's + ||t||_1` as an expression.
    pub total: Expr,
}

impl SlackInfo {
    pub fn ids(&self) -> BTreeSet<VarId> {
        self.s
            .iter()
            .chain(&self.t)
            .filter_map(|(_, e)| e.as_variable().map(|v| v.id))
            .collect()
    }

    /// Value of `1's + ||t||_1` at a point.
    pub fn total_at(&self, point: &Assignment) -> Result<f64, ExprError> {
        self.total.eval_scalar(point, &Default::default())
    }

    /// Smallest slacks making every relaxed constraint hold at `point`:
    /// `s_i` is the positive part of the scalarized violation and `t_j` the
    /// equality residual. `p` is the original problem.
    pub fn fill(&self, p: &BiconvexProblem, point: &mut Assignment) -> Result<(), ExprError> {
        for (i, s) in &self.s {
            let c = &p.constraints()[*i];
            let left = c.left.eval(point, p.param_values())?;
            let ConstraintKind::Cone(cone) = c.kind else { continue };
            let v = scalarized_violation(cone, &left).max(0.0);
            point.insert(s.as_variable().expect("slack").id, DMatrix::from_element(1, 1, v));
        }
        for (j, t) in &self.t {
            let left = p.constraints()[*j].left.eval(point, p.param_values())?;
            point.insert(t.as_variable().expect("slack").id, left);
        }
        Ok(())
    }
}

/// Smallest `s` with `left - s e_K ⪯_K 0`, possibly negative.
pub(crate) fn scalarized_violation(cone: Cone, left: &DMatrix<f64>) -> f64 {
    match cone {
        Cone::Nonneg(_) => left.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Cone::Soc(_) => {
            // -left = (t, x) must lie in the cone after adding s to t.
            let t = -left[0];
            let x = left.as_slice()[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            x - t
        }
        Cone::Psd(_) => {
            let sym = (left + left.transpose()) * 0.5;
            SymmetricEigen::new(sym).eigenvalues.max()
        }
        Cone::Zero(_) => left.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

/// A relaxed problem with its slacks.
#[derive(Debug, Clone)]
pub struct Relaxed {
    pub problem: BiconvexProblem,
    pub slacks: SlackInfo,
}

fn relax(p: &BiconvexProblem) -> Result<(Vec<Constraint>, SlackInfo), TransformError> {
    let mut constraints = Vec::new();
    let mut s = Vec::new();
    let mut t = Vec::new();
    for (i, c) in p.constraints().iter().enumerate() {
        match c.kind {
            ConstraintKind::Cone(cone @ (Cone::Nonneg(_) | Cone::Soc(_) | Cone::Psd(_))) => {
                let slack = Expr::variable(&format!("s#{i}"), (1, 1), true)?;
                let left = match cone {
                    Cone::Nonneg(_) => c.left.sub(&slack)?,
                    _ => c.left.sub(&Expr::constant(cone_unit(cone)?)?.multiply(&slack)?)?,
                };
                constraints.push(Constraint { kind: c.kind, left });
                s.push((i, slack));
            }
            ConstraintKind::Cone(Cone::Zero(_)) | ConstraintKind::Equality => {
                let slack = Expr::variable(&format!("t#{i}"), c.left.shape(), false)?;
                constraints.push(Constraint {
                    kind: ConstraintKind::Equality,
                    left: c.left.sub(&slack)?,
                });
                t.push((i, slack));
            }
        }
    }
    let mut total = Expr::scalar(0.0);
    for (_, v) in &s {
        total = total.add(v)?;
    }
    if !t.is_empty() {
        let flat = t
            .iter()
            .map(|(_, v)| {
                let n = v.shape().size();
                if v.shape().is_column() {
                    Ok(v.clone())
                } else {
                    v.reshape((n, 1))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = if flat.len() == 1 {
            flat[0].clone()
        } else {
            Expr::vstack(&flat)?
        };
        total = total.add(&stacked.norm1())?;
    }
    Ok((constraints, SlackInfo { s, t, total }))
}

fn rebuild(
    p: &BiconvexProblem,
    sense: Sense,
    objective: Expr,
    constraints: Vec<Constraint>,
) -> Result<BiconvexProblem, TransformError> {
    // Variables that only appeared in a dropped objective leave the partition.
    let mut present = BTreeSet::new();
    for root in std::iter::once(&objective).chain(constraints.iter().map(|c| &c.left)) {
        present.extend(root.variables().iter().copied());
    }
    let exprs = |ids: &BTreeSet<VarId>| -> Vec<Expr> {
        ids.iter()
            .filter(|id| present.contains(id))
            .map(|id| p.variable_expr(*id).expect("variable node").clone())
            .collect()
    };
    let mut out = new_problem(
        sense,
        objective,
        &exprs(&p.partition().block_x),
        &exprs(&p.partition().block_y),
        constraints,
        false,
    )?;
    out.inherit_values(p);
    Ok(out)
}

/// The feasibility relaxation: minimize `1's + ||t||_1` subject to
/// `f_i - s_i e_K ⪯ 0`, `h_j - t_j = 0`, `s >= 0`. Slacks are free variables
/// of the partition.
pub fn relax_feasibility(p: &BiconvexProblem) -> Result<Relaxed, TransformError> {
    let (constraints, slacks) = relax(p)?;
    let problem = rebuild(p, Sense::Minimize, slacks.total.clone(), constraints)?;
    Ok(Relaxed { problem, slacks })
}

/// The penalty relaxation: `f_0 + nu (1's + ||t||_1)` (minus when maximizing)
/// over the same relaxed constraints.
pub fn relax_objective(p: &BiconvexProblem, nu: f64) -> Result<Relaxed, TransformError> {
    if !(nu > 0.0) {
        return Err(TransformError::NonpositivePenalty(nu));
    }
    let (constraints, slacks) = relax(p)?;
    let objective = if slacks.s.is_empty() && slacks.t.is_empty() {
        p.objective().clone()
    } else {
        let penalty = slacks.total.scale(nu);
        match p.sense() {
            Sense::Minimize => p.objective().add(&penalty)?,
            Sense::Maximize => p.objective().sub(&penalty)?,
        }
    };
    let problem = rebuild(p, p.sense(), objective, constraints)?;
    Ok(Relaxed { problem, slacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Curvature;

    fn scalar(name: &str) -> Expr {
        Expr::variable(name, (1, 1), false).unwrap()
    }

    fn at(pairs: &[(&Expr, f64)]) -> Assignment {
        pairs
            .iter()
            .map(|(e, v)| (e.as_variable().unwrap().id, DMatrix::from_element(1, 1, *v)))
            .collect()
    }

    #[test]
    fn cone_units() {
        assert_eq!(cone_unit(Cone::Nonneg(3)).unwrap(), DMatrix::from_element(3, 1, 1.0));
        assert_eq!(
            cone_unit(Cone::Soc(4)).unwrap(),
            DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0])
        );
        assert_eq!(cone_unit(Cone::Psd(2)).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(cone_unit(Cone::Zero(2)), Err(TransformError::ZeroCone));
    }

    #[test]
    fn nmf_x_step() {
        let x = Expr::variable("X", (2, 2), true).unwrap();
        let y = Expr::variable("Y", (2, 3), true).unwrap();
        let a = Expr::constant(DMatrix::from_element(2, 3, 1.0)).unwrap();
        let obj = x.matmul(&y).unwrap().sub(&a).unwrap().sum_squares();
        let p = new_problem(Sense::Minimize, obj, &[x.clone()], &[y.clone()], vec![], false).unwrap();
        let (xid, yid) = (x.as_variable().unwrap().id, y.as_variable().unwrap().id);
        let xv = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 0.0]);
        let yv = DMatrix::from_row_slice(2, 3, &[0.3, 1.0, 2.0, 1.5, 0.0, 0.7]);
        let fixed: Assignment = [(yid, yv.clone())].into();
        let anchor: Assignment = [(xid, DMatrix::from_element(2, 2, 0.1))].into();

        let sp = fix_block(&p, Block::X, &fixed, 0.0, &anchor).unwrap();
        assert_eq!(sp.active.keys().copied().collect::<Vec<_>>(), vec![xid]);
        assert_eq!(sp.objective.curvature(), Curvature::Convex);
        let point: Assignment = [(xid, xv.clone())].into();
        let f0 = p
            .objective()
            .eval_scalar(&[(xid, xv.clone()), (yid, yv.clone())].into(), &Default::default())
            .unwrap();
        let f = sp.objective.eval_scalar(&point, &Default::default()).unwrap();
        assert!((f - f0).abs() <= 1e-12 * f0.abs().max(1.0));

        let prox = fix_block(&p, Block::X, &fixed, 1.0, &anchor).unwrap();
        let expected = f0 + xv.iter().map(|v| (v - 0.1).powi(2)).sum::<f64>();
        let f = prox.objective.eval_scalar(&point, &Default::default()).unwrap();
        assert!((f - expected).abs() <= 1e-12 * expected.abs());

        assert!(matches!(
            fix_block(&p, Block::X, &Assignment::new(), 0.0, &anchor),
            Err(TransformError::MissingValue(_))
        ));
        assert!(matches!(
            fix_block(&p, Block::X, &fixed, 1.0, &Assignment::new()),
            Err(TransformError::MissingAnchor(_))
        ));
    }

    #[test]
    fn slack_fill_makes_relaxation_feasible() {
        let (x, y) = (scalar("x"), scalar("y"));
        let one = Expr::scalar(1.0);
        let c1 = Constraint::leq(&x.add(&y).unwrap(), &one).unwrap();
        let c2 = Constraint::eq(&x, &y).unwrap();
        let obj = x.multiply(&y).unwrap();
        let p = new_problem(Sense::Minimize, obj, &[x.clone()], &[y.clone()], vec![c1, c2], false).unwrap();
        let r = relax_feasibility(&p).unwrap();
        assert!(r.problem.is_dbcp(), "{:?}", r.problem.verdict());
        assert_eq!(r.slacks.s.len(), 1);
        assert_eq!(r.slacks.t.len(), 1);
        for (xv, yv) in [(3.0, 0.5), (-1.0, 2.0), (0.2, 0.2)] {
            let mut point = at(&[(&x, xv), (&y, yv)]);
            r.slacks.fill(&p, &mut point).unwrap();
            let s = r.slacks.s[0].1.eval_scalar(&point, &Default::default()).unwrap();
            let t = r.slacks.t[0].1.eval_scalar(&point, &Default::default()).unwrap();
            assert_eq!(s, (xv + yv - 1.0f64).max(0.0));
            assert_eq!(t, xv - yv);
            for c in r.problem.constraints() {
                let v = c.left.eval(&point, &Default::default()).unwrap();
                match c.kind {
                    ConstraintKind::Equality => assert!(v.iter().all(|e| e.abs() <= 1e-15)),
                    _ => assert!(v.iter().all(|e| *e <= 1e-15)),
                }
            }
        }
    }

    #[test]
    fn soc_relaxation_uses_first_axis() {
        let z = Expr::variable("z", (2, 1), false).unwrap();
        let w = scalar("w");
        let c = Constraint::soc(&Expr::scalar(1.0), &z).unwrap();
        let obj = w.multiply(&z.sum()).unwrap();
        let p = new_problem(Sense::Minimize, obj, &[z.clone()], &[w.clone()], vec![c], false).unwrap();
        let r = relax_feasibility(&p).unwrap();
        let mut point: Assignment = [
            (
                z.as_variable().unwrap().id,
                DMatrix::from_column_slice(2, 1, &[3.0, 4.0]),
            ),
            (w.as_variable().unwrap().id, DMatrix::from_element(1, 1, 0.0)),
        ]
        .into();
        r.slacks.fill(&p, &mut point).unwrap();
        assert_eq!(r.slacks.total_at(&point).unwrap(), 4.0);
    }

    #[test]
    fn unconstrained_relaxations() {
        let (x, y) = (scalar("x"), scalar("y"));
        let obj = x.multiply(&y).unwrap().square();
        let p = new_problem(Sense::Minimize, obj.clone(), &[x.clone()], &[y.clone()], vec![], false).unwrap();
        let r = relax_feasibility(&p).unwrap();
        assert_eq!(r.problem.objective().as_constant().unwrap()[(0, 0)], 0.0);
        let q = relax_objective(&p, 5.0).unwrap();
        assert_eq!(q.problem.objective(), &obj);
        assert!(relax_objective(&p, 0.0).is_err());
    }
}
