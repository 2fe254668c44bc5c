use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::conesolver::{project, solve};
use crate::problem::Constraint;
use crate::verify::Block as Side;

fn var(name: &str, n: usize, nonneg: bool) -> Expr {
    Expr::variable(name, (n, 1), nonneg).unwrap()
}

fn col(v: &[f64]) -> Expr {
    Expr::constant(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
}

fn subproblem(sense: Sense, objective: Expr, constraints: Vec<Constraint>) -> ConvexSubproblem {
    let mut active = BTreeMap::new();
    for root in std::iter::once(&objective).chain(constraints.iter().map(|c| &c.left)) {
        for v in root.variable_nodes() {
            active.insert(v.id, v);
        }
    }
    ConvexSubproblem {
        sense,
        objective,
        constraints,
        active,
        block: Side::X,
        lbd: 0.0,
    }
}

fn solved(sp: &ConvexSubproblem) -> (Assignment, f64, DVector<f64>, Recovery) {
    let (cp, r) = canonicalize(sp).unwrap();
    cp.validate().unwrap();
    let sol = solve(&cp, 1e-9, 1e-9, 100_000).unwrap();
    assert_eq!(sol.status, crate::conesolver::ConeStatus::Optimal);
    let (values, obj) = recover(&r, &sol).unwrap();
    (values, obj, sol.x, r)
}

fn value(values: &Assignment, e: &Expr) -> DMatrix<f64> {
    values[&e.as_variable().unwrap().id].clone()
}

#[test]
fn norm2_uses_one_epigraph_and_one_cone() {
    let x = var("x", 3, false);
    let obj = x.sub(&col(&[1.0, -2.0, 0.5])).unwrap().norm2();
    let sp = subproblem(Sense::Minimize, obj, vec![]);
    let (cp, r) = canonicalize(&sp).unwrap();
    assert_eq!(r.epigraphs.len(), 1);
    assert_eq!(cp.num_vars(), 4);
    assert_eq!(cp.cones, vec![Cone::Soc(4)]);
    let (values, obj, _, _) = solved(&sp);
    assert!(obj.abs() <= 1e-6);
    let x = value(&values, &x);
    assert!((x[0] - 1.0).abs() <= 1e-5 && (x[1] + 2.0).abs() <= 1e-5);
}

#[test]
fn norm1_uses_two_auxiliaries() {
    let x = var("x", 2, false);
    let sp = subproblem(Sense::Minimize, x.norm1(), vec![]);
    let (cp, _) = canonicalize(&sp).unwrap();
    assert_eq!(cp.num_vars(), 4);
    assert_eq!(cp.cones, vec![Cone::Nonneg(4)]);
    assert!(cp.p.is_none());
    assert_eq!(cp.c.as_slice(), &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn sum_squares_reaches_zero() {
    let x = var("x", 4, false);
    let a = [0.3, -1.2, 2.0, 0.0];
    let sp = subproblem(Sense::Minimize, x.sub(&col(&a)).unwrap().sum_squares(), vec![]);
    let (values, obj, _, _) = solved(&sp);
    assert!(obj <= 1e-6, "{obj}");
    for (got, want) in value(&values, &x).iter().zip(a) {
        assert!((got - want).abs() <= 1e-6);
    }
}

#[test]
fn identity_problem_slices_solution() {
    let x = var("x", 2, false);
    let y = var("y", 3, false);
    let obj = x.sum().add(&y.sum()).unwrap();
    let cons = vec![
        Constraint::geq(&x, &col(&[1.0, 2.0])).unwrap(),
        Constraint::geq(&y, &col(&[-1.0, 0.0, 4.0])).unwrap(),
    ];
    let sp = subproblem(Sense::Minimize, obj, cons);
    let (cp, r) = canonicalize(&sp).unwrap();
    assert!(r.epigraphs.is_empty());
    let sol = solve(&cp, 1e-9, 1e-9, 10_000).unwrap();
    let (values, obj) = recover(&r, &sol).unwrap();
    assert_eq!(value(&values, &x).as_slice(), &sol.x.as_slice()[0..2]);
    assert_eq!(value(&values, &y).as_slice(), &sol.x.as_slice()[2..5]);
    assert!((obj - 6.0).abs() <= 1e-6);
}

#[test]
fn epigraph_columns_are_excluded() {
    let x = var("x", 2, false);
    let sp = subproblem(Sense::Minimize, x.norm_inf(), vec![]);
    let (values, _, sol_x, r) = solved(&sp);
    assert_eq!(values.len(), 1);
    assert_eq!(r.epigraphs[0].col, 2);
    assert_eq!(sol_x.len(), 3);
}

#[test]
fn recover_checks_dimension() {
    let x = var("x", 2, false);
    let sp = subproblem(Sense::Minimize, x.norm2(), vec![]);
    let (cp, r) = canonicalize(&sp).unwrap();
    let mut sol = solve(&cp, 1e-8, 1e-8, 10_000).unwrap();
    sol.x = DVector::zeros(1);
    assert!(matches!(recover(&r, &sol), Err(CanonError::Dimension { .. })));
}

/// Fill auxiliary columns at a given point: epigraphs take their atom's value
/// and remaining columns are solved from equality rows with one unknown.
fn lift(cp: &ConeProgram, r: &Recovery, point: &Assignment) -> DVector<f64> {
    let n = cp.num_vars();
    let mut x = DVector::zeros(n);
    let mut known = vec![false; n];
    for &(id, c, shape, _) in &r.variables {
        x.rows_mut(c, shape.size()).copy_from_slice(point[&id].as_slice());
        known[c..c + shape.size()].iter_mut().for_each(|k| *k = true);
    }
    for ep in &r.epigraphs {
        x[ep.col] = ep.atom.eval(point, &Default::default()).unwrap().as_slice()[ep.entry];
        known[ep.col] = true;
    }
    let zero_rows = match cp.cones.first() {
        Some(Cone::Zero(m)) => *m,
        _ => 0,
    };
    let dense = DMatrix::from(&cp.a);
    for i in 0..zero_rows {
        let unknown: Vec<usize> = (0..n).filter(|&j| dense[(i, j)] != 0.0 && !known[j]).collect();
        assert_eq!(unknown.len(), 1);
        let j = unknown[0];
        let rest: f64 = (0..n).filter(|&k| k != j).map(|k| dense[(i, k)] * x[k]).sum();
        x[j] = (cp.b[i] - rest) / dense[(i, j)];
        known[j] = true;
    }
    assert!(known.iter().all(|k| *k));
    x
}

#[test]
fn round_trip_preserves_objective() {
    let x = var("x", 3, false);
    let a = col(&[1.0, -1.0, 0.5]);
    let obj = x
        .sub(&a)
        .unwrap()
        .sum_squares()
        .add(&x.norm2().scale(2.0))
        .unwrap()
        .add(&x.norm_inf())
        .unwrap()
        .add(&x.maximum(&a).unwrap().sum())
        .unwrap();
    let sp = subproblem(Sense::Minimize, obj.clone(), vec![]);
    let (cp, r) = canonicalize(&sp).unwrap();
    let point: Assignment = [(
        x.as_variable().unwrap().id,
        DMatrix::from_column_slice(3, 1, &[0.2, 3.0, -1.5]),
    )]
    .into();
    let lifted = lift(&cp, &r, &point);
    let f0 = obj.eval_scalar(&point, &Default::default()).unwrap();
    let f = cp.objective(&lifted) + r.offset;
    assert!((f - f0).abs() <= 1e-10 * f0.abs().max(1.0), "{f} vs {f0}");

    // The lifted point satisfies every cone row.
    let s = &cp.b - &cp.a * &lifted;
    let mut k = 0;
    for cone in &cp.cones {
        let block = &s.as_slice()[k..k + cone.dim()];
        let proj = project(cone, block).unwrap();
        let gap = block.iter().zip(&proj).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-10, "{cone:?}: {gap}");
        k += cone.dim();
    }
}

#[test]
fn epigraphs_are_tight_at_optimum() {
    let x = var("x", 3, false);
    let a = col(&[1.0, -1.0, 0.5]);
    let obj = x
        .sub(&a)
        .unwrap()
        .norm2()
        .add(&x.norm_inf())
        .unwrap()
        .add(&x.maximum(&a).unwrap().sum())
        .unwrap()
        .add(&x.add(&Expr::scalar(0.25)).unwrap().abs().sum())
        .unwrap();
    let sp = subproblem(Sense::Minimize, obj, vec![]);
    let (values, _, sol_x, r) = solved(&sp);
    assert!(!r.epigraphs.is_empty());
    for ep in &r.epigraphs {
        let exact = ep.atom.eval(&values, &Default::default()).unwrap().as_slice()[ep.entry];
        assert!(
            (sol_x[ep.col] - exact).abs() <= 1e-6,
            "{}: {} vs {exact}",
            ep.atom,
            sol_x[ep.col]
        );
    }
}

#[test]
fn maximize_concave() {
    let x = var("x", 2, false);
    let obj = x.sub(&col(&[1.0, 2.0])).unwrap().sum_squares().neg();
    let sp = subproblem(Sense::Maximize, obj, vec![]);
    let (values, obj, _, _) = solved(&sp);
    assert!(obj.abs() <= 1e-6);
    assert!((value(&values, &x)[1] - 2.0).abs() <= 1e-5);
}

#[test]
fn nonneg_attribute_becomes_rows() {
    let x = var("x", 2, true);
    let sp = subproblem(
        Sense::Minimize,
        x.sub(&col(&[-1.0, 1.0])).unwrap().sum_squares(),
        vec![],
    );
    let (values, obj, _, _) = solved(&sp);
    let x = value(&values, &x);
    assert!(x[0] >= 0.0 && x[0] <= 1e-6);
    assert!((obj - 1.0).abs() <= 1e-6);
}

#[test]
fn constant_constraints() {
    let x = var("x", 1, false);
    let ok = Constraint::leq(&Expr::scalar(1.0), &Expr::scalar(2.0)).unwrap();
    let sp = subproblem(Sense::Minimize, x.square().sum(), vec![ok]);
    let (cp, _) = canonicalize(&sp).unwrap();
    assert_eq!(cp.num_rows(), 1);
    let bad = Constraint::eq(&Expr::scalar(1.0), &Expr::scalar(2.0)).unwrap();
    let sp = subproblem(Sense::Minimize, x.square().sum(), vec![bad]);
    assert!(matches!(
        canonicalize(&sp),
        Err(CanonError::InfeasibleConstant { ref location, .. }) if location == "constraint.0"
    ));
}

#[test]
fn non_dcp_rejected() {
    let x = var("x", 2, false);
    let sp = subproblem(Sense::Maximize, x.norm2(), vec![]);
    assert!(matches!(canonicalize(&sp), Err(CanonError::NotDcp { .. })));
    let c = Constraint::eq(&x.norm2(), &Expr::scalar(1.0)).unwrap();
    let sp = subproblem(Sense::Minimize, x.sum(), vec![c]);
    assert!(matches!(canonicalize(&sp), Err(CanonError::NotDcp { ref location, .. }) if location == "constraint.0"));
}

#[test]
fn rows_match_cone_dims() {
    let x = var("x", 3, true);
    let t = var("t", 1, false);
    let cons = vec![
        Constraint::soc(&t, &x).unwrap(),
        Constraint::leq(&x.square(), &Expr::scalar(4.0)).unwrap(),
        Constraint::eq(&x.sum(), &Expr::scalar(1.0)).unwrap(),
    ];
    let sp = subproblem(Sense::Minimize, t.sum(), cons);
    let (cp, _) = canonicalize(&sp).unwrap();
    assert_eq!(cp.cones.iter().map(Cone::dim).sum::<usize>(), cp.a.nrows());
    let ranks: Vec<u8> = cp.cones.iter().map(Cone::rank).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    let (_, obj, _, _) = solved(&sp);
    assert!((obj - 1.0 / 3f64.sqrt()).abs() <= 1e-5);
}

/// Minimizer of a convex function on an interval by ternary search.
fn argmin_1d(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi))
}

fn small_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn oracle_norm2_projection(a in small_vec()) {
        // distance from a to the nonnegative orthant
        let x = var("x", a.len(), false);
        let obj = x.sub(&col(&a)).unwrap().norm2();
        let sp = subproblem(Sense::Minimize, obj, vec![Constraint::geq(&x, &Expr::scalar(0.0)).unwrap()]);
        let (_, got, _, _) = solved(&sp);
        let want = a.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>().sqrt();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_norm1_soft_threshold(a in small_vec()) {
        let x = var("x", a.len(), false);
        let obj = x.sub(&col(&a)).unwrap().norm1().add(&x.sum_squares()).unwrap();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![]));
        let want: f64 = a.iter().map(|&v| argmin_1d(|t| (t - v).abs() + t * t, -4.0, 4.0)).sum();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_norm_inf(a in small_vec()) {
        let x = var("x", a.len(), true);
        let obj = x.sub(&col(&a)).unwrap().norm_inf();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![]));
        let want = a.iter().fold(0.0f64, |m, v| m.max(-v));
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_maximum(a in small_vec(), shift in -2.0f64..2.0) {
        let x = var("x", a.len(), false);
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let obj = x.maximum(&col(&a)).unwrap().sum().add(&x.sub(&col(&b)).unwrap().sum_squares()).unwrap();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![]));
        let want: f64 = a
            .iter()
            .zip(&b)
            .map(|(&ai, &bi)| argmin_1d(|t| t.max(ai) + (t - bi).powi(2), -8.0, 8.0))
            .sum();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_square_constraint(a in small_vec()) {
        let x = var("x", a.len(), false);
        let c = Constraint::leq(&x.sub(&col(&a)).unwrap().square(), &Expr::scalar(1.0)).unwrap();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, x.sum(), vec![c]));
        let want: f64 = a.iter().map(|v| v - 1.0).sum();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_abs_with_bound(a in small_vec(), lo in -2.0f64..2.0) {
        let x = var("x", a.len(), false);
        let c = Constraint::geq(&x, &Expr::scalar(lo)).unwrap();
        let obj = x.sub(&col(&a)).unwrap().abs().sum();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![c]));
        let want: f64 = a.iter().map(|v| (lo - v).max(0.0)).sum();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }

    #[test]
    fn oracle_convolution_fit(k in small_vec(), x0 in small_vec()) {
        prop_assume!(k.iter().any(|v| v.abs() > 0.5));
        let x = var("x", x0.len(), false);
        let y: Vec<f64> = {
            let mut y = vec![0.0; k.len() + x0.len() - 1];
            for (i, ki) in k.iter().enumerate() {
                for (j, xj) in x0.iter().enumerate() {
                    y[i + j] += ki * xj;
                }
            }
            y
        };
        let obj = col(&k).convolve(&x).unwrap().sub(&col(&y)).unwrap().sum_squares();
        let (values, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![]));
        prop_assert!(got.abs() <= 1e-4, "{}", got);
        for (g, w) in value(&values, &x).iter().zip(&x0) {
            prop_assert!((g - w).abs() <= 1e-3);
        }
    }

    #[test]
    fn oracle_smoothing(a in prop::collection::vec(-3.0f64..3.0, 2..=4)) {
        // min ||Dx||^2 + ||x - a||^2 has x = (I + D'D)^{-1} a
        let n = a.len();
        let x = var("x", n, false);
        let obj = x.diff().unwrap().sum_squares().add(&x.sub(&col(&a)).unwrap().sum_squares()).unwrap();
        let (_, got, _, _) = solved(&subproblem(Sense::Minimize, obj, vec![]));
        let d = DMatrix::from_fn(n - 1, n, |i, j| if i == j { 1.0 } else if j == i + 1 { -1.0 } else { 0.0 });
        let av = DVector::from_column_slice(&a);
        let m = DMatrix::identity(n, n) + d.transpose() * &d;
        let xs = m.lu().solve(&av).unwrap();
        let want = (&d * &xs).norm_squared() + (&xs - &av).norm_squared();
        prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
    }
}
