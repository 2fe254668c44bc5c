//! Standard-form cone programs and the solvers that consume them.
//!
//! A [`ConeProgram`] is
//!
//! ```text
//! minimize    (1/2) x'Px + c'x
//! subject to  Ax + s = b,  s in K
//! ```
//!
//! where `K` is an ordered product of [`Cone`] blocks. The quadratic term is
//! optional; leaving `p` empty gives the purely linear form.
//!
//! The built-in solver is an operator-splitting (ADMM) method. Other solvers can
//! be registered by name in a [`SolverRegistry`].

mod admm;
mod cone;
pub(crate) mod ldl;
pub(crate) mod sparse;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use serde::Serialize;
use thiserror::Error;

pub use cone::{project, Cone};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("unsupported by this solver: {0}")]
    Unsupported(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("non-finite data in cone program")]
    NonFinite,
}

/// A cone program in standard form.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    /// Upper triangle of the (positive semidefinite) quadratic objective.
    pub p: Option<CscMatrix<f64>>,
    pub c: DVector<f64>,
    pub a: CscMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: Vec<Cone>,
    /// Optional starting point for `x`; solvers may ignore it.
    pub warm_start: Option<DVector<f64>>,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// `(1/2) x'Px + c'x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let mut value = self.c.dot(x);
        if let Some(p) = &self.p {
            let mut px = vec![0.0; x.len()];
            sparse::sym_upper_mul(p, x.as_slice(), &mut px);
            value += 0.5 * x.as_slice().iter().zip(&px).map(|(a, b)| a * b).sum::<f64>();
        }
        value
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        let m = self.num_rows();
        let rows: usize = self.cones.iter().map(Cone::dim).sum();
        if rows != m {
            return Err(SolverError::Dimension {
                expected: m,
                found: rows,
            });
        }
        if self.a.nrows() != m || self.a.ncols() != n {
            return Err(SolverError::Dimension {
                expected: m * n,
                found: self.a.nrows() * self.a.ncols(),
            });
        }
        if let Some(p) = &self.p {
            if p.nrows() != n || p.ncols() != n {
                return Err(SolverError::Dimension {
                    expected: n,
                    found: p.nrows(),
                });
            }
            if p.values().iter().any(|v| !v.is_finite()) {
                return Err(SolverError::NonFinite);
            }
        }
        if let Some(x0) = &self.warm_start {
            if x0.len() != n {
                return Err(SolverError::Dimension {
                    expected: n,
                    found: x0.len(),
                });
            }
        }
        let finite = self
            .c
            .iter()
            .chain(self.b.iter())
            .chain(self.a.values())
            .all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeStatus {
    Optimal,
    /// Stalled short of the requested tolerances but within the reduced ones.
    OptimalInaccurate,
    Infeasible,
    Unbounded,
    MaxIters,
}

impl fmt::Display for ConeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConeStatus::Optimal => "optimal",
            ConeStatus::OptimalInaccurate => "optimal_inaccurate",
            ConeStatus::Infeasible => "infeasible",
            ConeStatus::Unbounded => "unbounded",
            ConeStatus::MaxIters => "max_iters",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: ConeStatus,
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    /// Dual multipliers; at optimality `Px + c + A'y = 0` and `y` lies in the dual cone.
    pub y: DVector<f64>,
    pub objective: f64,
    /// `||Ax + s - b||_inf`
    pub primal_residual: f64,
    /// `||Px + c + A'y||_inf`
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Settings understood by the built-in solver; external solvers read what they need.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Absolute and relative tolerance accepted once the iteration stalls.
    pub tol_reduced: f64,
    /// Iterations without residual progress before settling for `tol_reduced`.
    pub stall_iters: usize,
    pub rho: f64,
    /// Multiplier applied to `rho` on equality (zero-cone) rows.
    pub eq_rho_scale: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Relative tolerance for infeasibility certificates.
    pub infeasibility_tol: f64,
    pub check_interval: usize,
    pub scaling_iters: usize,
    /// Rebalance `rho` from the residual ratio, refactoring when it moves.
    pub adaptive_rho: bool,
    /// Residual checks between step-size updates.
    pub adaptive_rho_interval: usize,
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_abs: 1e-7,
            tol_rel: 1e-7,
            max_iters: 50_000,
            tol_reduced: 1e-5,
            stall_iters: 2_000,
            rho: 1.0,
            eq_rho_scale: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            infeasibility_tol: 1e-5,
            check_interval: 5,
            scaling_iters: 10,
            adaptive_rho: true,
            adaptive_rho_interval: 5,
            polish: true,
        }
    }
}

/// A conic solver backend.
pub trait ConeSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, cp: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution, SolverError>;
}

/// The bundled ADMM solver. Handles zero, nonneg and second-order cones.
#[derive(Debug, Default, Clone, Copy)]
pub struct BuiltinSolver;

impl ConeSolver for BuiltinSolver {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&self, cp: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution, SolverError> {
        admm::solve(cp, settings)
    }
}

/// Solve with the built-in solver using default settings except for tolerances
/// and the iteration cap.
pub fn solve(cp: &ConeProgram, tol_abs: f64, tol_rel: f64, max_iters: usize) -> Result<ConeSolution, SolverError> {
    let settings = SolverSettings {
        tol_abs,
        tol_rel,
        max_iters,
        ..SolverSettings::default()
    };
    BuiltinSolver.solve(cp, &settings)
}

/// Named solver backends. `builtin` is always registered.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<String, Arc<dyn ConeSolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut registry = Self {
            solvers: BTreeMap::new(),
        };
        registry.register(Arc::new(BuiltinSolver));
        registry
    }
}

impl fmt::Debug for SolverRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.solvers.keys()).finish()
    }
}

impl SolverRegistry {
    /// Register a solver under its own name, replacing any previous entry.
    pub fn register(&mut self, solver: Arc<dyn ConeSolver>) {
        self.solvers.insert(solver.name().to_string(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ConeSolver>, SolverError> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| SolverError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.solvers.keys().map(String::as_str)
    }
}
