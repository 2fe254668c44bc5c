use biconvex::conesolver::{
    solve, BuiltinSolver, Cone, ConeProgram, ConeSolver, ConeStatus, SolverError, SolverRegistry, SolverSettings,
};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CscMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sparse(m: &DMatrix<f64>) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                coo.push(i, j, m[(i, j)]);
            }
        }
    }
    CscMatrix::from(&coo)
}

fn upper(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i <= j { m[(i, j)] } else { 0.0 })
}

/// A feasible, bounded program: random rows with a known interior point, a
/// box `|x| <= 5`, optionally a convex quadratic and a second-order cone.
fn random_program(seed: u64, quadratic: bool, with_soc: bool) -> (ConeProgram, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let k = rng.random_range(0..=4);
    let mut g = DMatrix::from_fn(k, n, |_, _| rng.random_range(-2.0..2.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut h = &g * &x0 + DVector::from_fn(k, |_, _| rng.random_range(0.1..1.0));
    // box rows
    let eye = DMatrix::<f64>::identity(n, n);
    g = DMatrix::from_fn(k + 2 * n, n, |i, j| {
        if i < k {
            g[(i, j)]
        } else if i < k + n {
            eye[(i - k, j)]
        } else {
            -eye[(i - k - n, j)]
        }
    });
    h = DVector::from_fn(k + 2 * n, |i, _| if i < k { h[i] } else { 5.0 });
    let mut cones = vec![Cone::Nonneg(k + 2 * n)];
    let (mut a, mut b) = (g, h);
    if with_soc {
        // ||x - x0|| <= 1 + |x0|: rows (-0, -x) + s = (r, -x0)
        let rows = n + 1;
        let r = 1.0 + x0.norm();
        let a_soc = DMatrix::from_fn(rows, n, |i, j| if i > 0 && i - 1 == j { -1.0 } else { 0.0 });
        let b_soc = DVector::from_fn(rows, |i, _| if i == 0 { r } else { -x0[i - 1] });
        let (m0, mn) = (a.nrows(), a.nrows() + rows);
        a = DMatrix::from_fn(mn, n, |i, j| if i < m0 { a[(i, j)] } else { a_soc[(i - m0, j)] });
        b = DVector::from_fn(mn, |i, _| if i < m0 { b[i] } else { b_soc[i - m0] });
        cones.push(Cone::Soc(rows));
    }
    let p = if quadratic {
        let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        Some(f.transpose() * f)
    } else {
        None
    };
    let c = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let cp = ConeProgram {
        p: p.as_ref().map(|p| sparse(&upper(p))),
        c,
        a: sparse(&a),
        b,
        cones,
        warm_start: None,
    };
    (cp, a, p.unwrap_or_else(|| DMatrix::zeros(n, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_and_duality_gap(seed in any::<u64>(), quadratic in any::<bool>(), with_soc in any::<bool>()) {
        let (cp, a, p) = random_program(seed, quadratic, with_soc);
        let sol = solve(&cp, 1e-9, 1e-9, 100_000).unwrap();
        prop_assert_eq!(sol.status, ConeStatus::Optimal, "residuals {:e} {:e}", sol.primal_residual, sol.dual_residual);

        let primal = (&a * &sol.x + &sol.s - &cp.b).amax();
        let dual = (&p * &sol.x + &cp.c + a.transpose() * &sol.y).amax();
        prop_assert!((primal - sol.primal_residual).abs() <= 1e-9, "{} vs {}", primal, sol.primal_residual);
        prop_assert!((dual - sol.dual_residual).abs() <= 1e-9, "{} vs {}", dual, sol.dual_residual);

        // Lagrange dual value -(1/2) x'Px - b'y
        let primal_value = 0.5 * sol.x.dot(&(&p * &sol.x)) + cp.c.dot(&sol.x);
        let dual_value = -0.5 * sol.x.dot(&(&p * &sol.x)) - cp.b.dot(&sol.y);
        prop_assert!((primal_value - sol.objective).abs() <= 1e-9 * (1.0 + primal_value.abs()));
        prop_assert!((primal_value - dual_value).abs() <= 1e-5, "gap {}", primal_value - dual_value);
    }
}

#[test]
fn warm_start_is_validated_and_harmless() {
    let (mut cp, _, _) = random_program(7, true, true);
    let cold = solve(&cp, 1e-9, 1e-9, 100_000).unwrap();
    cp.warm_start = Some(cold.x.clone());
    let warm = solve(&cp, 1e-9, 1e-9, 100_000).unwrap();
    assert_eq!(warm.status, ConeStatus::Optimal);
    assert!((warm.objective - cold.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()));

    cp.warm_start = Some(DVector::zeros(cp.num_vars() + 1));
    assert!(matches!(
        solve(&cp, 1e-9, 1e-9, 100),
        Err(SolverError::Dimension { .. })
    ));
}

#[test]
fn registry_dispatches_by_name() {
    struct Echo;
    impl ConeSolver for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn solve(
            &self,
            cp: &ConeProgram,
            settings: &SolverSettings,
        ) -> Result<biconvex::conesolver::ConeSolution, SolverError> {
            BuiltinSolver.solve(cp, settings)
        }
    }
    let mut registry = SolverRegistry::default();
    assert!(matches!(registry.get("echo"), Err(SolverError::UnknownSolver(_))));
    registry.register(std::sync::Arc::new(Echo));
    let names: Vec<&str> = registry.names().collect();
    assert!(names.contains(&"builtin") && names.contains(&"echo"));
    let (cp, _, _) = random_program(3, false, false);
    let a = registry
        .get("echo")
        .unwrap()
        .solve(&cp, &SolverSettings::default())
        .unwrap();
    let b = registry
        .get("builtin")
        .unwrap()
        .solve(&cp, &SolverSettings::default())
        .unwrap();
    assert_eq!(a.x, b.x);
}

#[test]
fn iteration_cap_reports_max_iters() {
    let (cp, _, _) = random_program(11, true, true);
    let settings = SolverSettings {
        max_iters: 3,
        polish: false,
        ..SolverSettings::default()
    };
    let sol = BuiltinSolver.solve(&cp, &settings).unwrap();
    assert_eq!(sol.status, ConeStatus::MaxIters);
}
