//! Problem containers, solve options, reports and random initialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::acs::IterationRecord;
use crate::conesolver::{Cone, SolverRegistry, SolverSettings};
use crate::expr::{Assignment, Expr, ExprError, ParamId, ParamValues, Parameter, Shape, VarId, Variable};
use crate::verify::{self, DbcpVerdict, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `left` lies in the negative of the cone: `-left in K`.
    Cone(Cone),
    /// `left == 0`, entrywise.
    Equality,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::Cone(Cone::Nonneg(_)) => f.write_str("inequality"),
            ConstraintKind::Cone(Cone::Soc(_)) => f.write_str("second-order cone constraint"),
            ConstraintKind::Cone(Cone::Psd(_)) => f.write_str("semidefinite constraint"),
            ConstraintKind::Cone(Cone::Zero(_)) | ConstraintKind::Equality => f.write_str("equality"),
        }
    }
}

/// `left ⪯_K 0` or `left == 0`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub left: Expr,
}

impl Constraint {
    /// `a <= b`, entrywise with scalar broadcasting.
    pub fn leq(a: &Expr, b: &Expr) -> Result<Constraint, ExprError> {
        let left = a.sub(b)?;
        Ok(Constraint {
            kind: ConstraintKind::Cone(Cone::Nonneg(left.shape().size())),
            left,
        })
    }

    pub fn geq(a: &Expr, b: &Expr) -> Result<Constraint, ExprError> {
        Self::leq(b, a)
    }

    pub fn eq(a: &Expr, b: &Expr) -> Result<Constraint, ExprError> {
        Ok(Constraint {
            kind: ConstraintKind::Equality,
            left: a.sub(b)?,
        })
    }

    /// `||x||_2 <= t` as a cone constraint; `t` must be scalar. Stored as
    /// `-(t, vec(x)) ⪯_soc 0`, t first.
    pub fn soc(t: &Expr, x: &Expr) -> Result<Constraint, ExprError> {
        if !t.shape().is_scalar() {
            return Err(ExprError::Shape {
                atom: "soc",
                shapes: vec![t.shape(), x.shape()],
                reason: "the bound must be scalar".into(),
            });
        }
        let n = x.shape().size();
        let flat = if x.shape().is_column() {
            x.clone()
        } else {
            x.reshape((n, 1))?
        };
        let left = Expr::vstack(&[t.clone(), flat])?.neg();
        Ok(Constraint {
            kind: ConstraintKind::Cone(Cone::Soc(n + 1)),
            left,
        })
    }

    /// `left ⪯_psd 0` for a square `left`. Only external solvers handle these.
    pub fn psd(left: &Expr) -> Result<Constraint, ExprError> {
        let s = left.shape();
        if s.rows != s.cols {
            return Err(ExprError::Shape {
                atom: "psd",
                shapes: vec![s],
                reason: "argument is not square".into(),
            });
        }
        Ok(Constraint {
            kind: ConstraintKind::Cone(Cone::Psd(s.rows)),
            left: left.clone(),
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("objective must be scalar, found shape {0}")]
    NonScalarObjective(Shape),
    #[error("variable `{0}` is in both partition blocks")]
    OverlappingBlocks(String),
    #[error("partition entries must be variables, found `{0}`")]
    NotAVariable(String),
    #[error("partition variable `{0}` does not appear in the problem")]
    UnknownVariable(String),
    #[error("name `{0}` is used by more than one variable or parameter")]
    DuplicateName(String),
    #[error("`{0}` is not a variable of this problem")]
    NotInProblem(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// A biconvex problem with a two-block partition.
#[derive(Debug, Clone)]
pub struct BiconvexProblem {
    sense: Sense,
    objective: Expr,
    constraints: Vec<Constraint>,
    partition: Partition,
    variables: BTreeMap<VarId, Variable>,
    parameters: BTreeMap<ParamId, Parameter>,
    var_exprs: BTreeMap<VarId, Expr>,
    param_exprs: BTreeMap<ParamId, Expr>,
    initial: Assignment,
    param_values: ParamValues,
    relax: bool,
    verdict: DbcpVerdict,
}

/// Build a problem and verify it eagerly. `relax` selects the infeasible-start
/// solve path.
pub fn new_problem(
    sense: Sense,
    objective: Expr,
    block_x: &[Expr],
    block_y: &[Expr],
    constraints: Vec<Constraint>,
    relax: bool,
) -> Result<BiconvexProblem, ProblemError> {
    if !objective.shape().is_scalar() {
        return Err(ProblemError::NonScalarObjective(objective.shape()));
    }
    let mut variables = BTreeMap::new();
    let mut parameters = BTreeMap::new();
    let mut var_exprs = BTreeMap::new();
    let mut param_exprs = BTreeMap::new();
    for root in std::iter::once(&objective).chain(constraints.iter().map(|c| &c.left)) {
        root.visit(&mut |e| {
            if let Some(v) = e.as_variable() {
                variables.insert(v.id, v.clone());
                var_exprs.entry(v.id).or_insert_with(|| e.clone());
            } else if let Some(p) = e.as_parameter() {
                parameters.insert(p.id, p.clone());
                param_exprs.entry(p.id).or_insert_with(|| e.clone());
            }
        });
    }
    let mut names = BTreeSet::new();
    let all_names = variables
        .values()
        .map(|v| &v.name)
        .chain(parameters.values().map(|p| &p.name));
    for name in all_names {
        if !names.insert(name.clone()) {
            return Err(ProblemError::DuplicateName(name.to_string()));
        }
    }

    let ids = |block: &[Expr]| -> Result<BTreeSet<VarId>, ProblemError> {
        block
            .iter()
            .map(|e| {
                let v = e
                    .as_variable()
                    .ok_or_else(|| ProblemError::NotAVariable(e.to_string()))?;
                if !variables.contains_key(&v.id) {
                    return Err(ProblemError::UnknownVariable(v.name.to_string()));
                }
                Ok(v.id)
            })
            .collect()
    };
    let bx = ids(block_x)?;
    let by = ids(block_y)?;
    if let Some(id) = bx.intersection(&by).next() {
        return Err(ProblemError::OverlappingBlocks(variables[id].name.to_string()));
    }
    let free = variables
        .keys()
        .filter(|id| !bx.contains(id) && !by.contains(id))
        .copied()
        .collect();
    let partition = Partition {
        block_x: bx,
        block_y: by,
        free,
    };
    let names: BTreeMap<VarId, String> = variables.values().map(|v| (v.id, v.name.to_string())).collect();
    let verdict = verify::verify_parts(sense, &objective, &constraints, &partition, &names);
    Ok(BiconvexProblem {
        sense,
        objective,
        constraints,
        partition,
        variables,
        parameters,
        var_exprs,
        param_exprs,
        initial: Assignment::new(),
        param_values: ParamValues::new(),
        relax,
        verdict,
    })
}

impl BiconvexProblem {
    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn relax_mode(&self) -> bool {
        self.relax
    }

    pub fn verdict(&self) -> &DbcpVerdict {
        &self.verdict
    }

    pub fn is_dbcp(&self) -> bool {
        self.verdict.compliant
    }

    /// Variables in id order.
    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.variables.values()
    }

    pub fn variable(&self, id: VarId) -> Option<&Variable> {
        self.variables.get(&id)
    }

    /// The expression node of a variable.
    pub fn variable_expr(&self, id: VarId) -> Option<&Expr> {
        self.var_exprs.get(&id)
    }

    /// Parameter expression nodes in id order.
    pub fn parameter_exprs(&self) -> impl Iterator<Item = &Expr> {
        self.param_exprs.values()
    }

    pub fn variable_by_name(&self, name: &str) -> Option<&Variable> {
        self.variables.values().find(|v| &*v.name == name)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Parameter> {
        self.parameters.values()
    }

    pub fn initial(&self) -> &Assignment {
        &self.initial
    }

    pub fn param_values(&self) -> &ParamValues {
        &self.param_values
    }

    /// Set the starting value of a variable.
    pub fn set_initial(&mut self, var: &Expr, value: DMatrix<f64>) -> Result<(), ProblemError> {
        let v = var
            .as_variable()
            .ok_or_else(|| ProblemError::NotAVariable(var.to_string()))?;
        self.set_initial_by_id(v.id, value)
    }

    pub fn set_initial_by_id(&mut self, id: VarId, value: DMatrix<f64>) -> Result<(), ProblemError> {
        let v = self
            .variables
            .get(&id)
            .ok_or_else(|| ProblemError::NotInProblem(id.to_string()))?;
        check_value(&v.name, v.shape, &value)?;
        self.initial.insert(id, value);
        Ok(())
    }

    pub fn set_param(&mut self, param: &Expr, value: DMatrix<f64>) -> Result<(), ProblemError> {
        let p = param
            .as_parameter()
            .ok_or_else(|| ProblemError::NotInProblem(param.to_string()))?;
        check_value(&p.name, p.shape, &value)?;
        self.param_values.insert(p.id, value);
        Ok(())
    }

    /// Copy starting values and parameter values from another problem built
    /// over the same expressions.
    pub(crate) fn inherit_values(&mut self, other: &BiconvexProblem) {
        for (id, v) in &other.initial {
            if self.variables.contains_key(id) {
                self.initial.insert(*id, v.clone());
            }
        }
        self.param_values = other.param_values.clone();
    }

    /// Objective value at a point, in the problem's own sense.
    pub fn objective_value(&self, point: &Assignment) -> Result<f64, ExprError> {
        self.objective.eval_scalar(point, &self.param_values)
    }
}

fn check_value(name: &str, expected: Shape, value: &DMatrix<f64>) -> Result<(), ProblemError> {
    let found = Shape::new(value.nrows(), value.ncols());
    if found != expected {
        return Err(ExprError::ValueShape {
            name: name.to_string(),
            expected,
            found,
        }
        .into());
    }
    Ok(())
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Starting point: user-provided values where present, otherwise standard
/// normal draws from a generator keyed by `seed` and the variable name.
/// Nonnegative variables take the absolute value of their draws.
pub fn initialize_missing(p: &BiconvexProblem, seed: u64) -> Assignment {
    let mut out = Assignment::new();
    for v in p.variables() {
        if let Some(value) = p.initial.get(&v.id) {
            out.insert(v.id, value.clone());
            continue;
        }
        let key = fnv1a(v.name.as_bytes()) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha20Rng::seed_from_u64(key);
        let value = DMatrix::from_fn(v.shape.rows, v.shape.cols, |_, _| {
            let draw: f64 = StandardNormal.sample(&mut rng);
            if v.nonneg {
                draw.abs()
            } else {
                draw
            }
        });
        out.insert(v.id, value);
    }
    out
}

/// Options for the alternating solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Proximal weight λ; zero disables the proximal term.
    pub lbd: f64,
    /// Slack penalty ν for infeasible-start solves.
    pub nu: f64,
    pub gap_tolerance: f64,
    pub max_iters: usize,
    /// Iteration cap for the feasible-start search.
    pub init_max_iters: usize,
    /// Violation above which a starting point counts as infeasible.
    pub feas_tolerance: f64,
    /// Total slack at which the feasible-start search stops.
    pub slack_tolerance: f64,
    pub seed: u64,
    pub solver: String,
    pub solver_settings: SolverSettings,
    pub registry: SolverRegistry,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lbd: 0.0,
            nu: 100.0,
            gap_tolerance: 1e-6,
            max_iters: 100,
            init_max_iters: 50,
            feas_tolerance: 1e-6,
            slack_tolerance: 1e-7,
            seed: 0,
            solver: "builtin".into(),
            solver_settings: SolverSettings::default(),
            registry: SolverRegistry::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let positive = [
            ("nu", self.nu),
            ("gap_tolerance", self.gap_tolerance),
            ("feas_tolerance", self.feas_tolerance),
            ("slack_tolerance", self.slack_tolerance),
            ("solver tol_abs", self.solver_settings.tol_abs),
            ("solver tol_rel", self.solver_settings.tol_rel),
            ("solver tol_reduced", self.solver_settings.tol_reduced),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ProblemError::InvalidOption(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lbd >= 0.0 && self.lbd.is_finite()) {
            return Err(ProblemError::InvalidOption(format!(
                "lbd must be nonnegative, got {}",
                self.lbd
            )));
        }
        if self.max_iters == 0 || self.init_max_iters == 0 || self.solver_settings.max_iters == 0 {
            return Err(ProblemError::InvalidOption("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    SubproblemInfeasible,
    SubproblemUnbounded,
    NotDbcp,
    SolverError,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::SubproblemInfeasible => "subproblem_infeasible",
            SolveStatus::SubproblemUnbounded => "subproblem_unbounded",
            SolveStatus::NotDbcp => "not_dbcp",
            SolveStatus::SolverError => "solver_error",
        })
    }
}

/// Outcome of the feasible-start search that preceded the main iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSummary {
    pub found: bool,
    pub half_steps: usize,
    pub total_slack: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Objective at the final point, in the problem's sense, without penalty terms.
    pub objective: f64,
    /// Completed full iterations.
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    /// Objective driven by the alternation after each half-step (penalized in
    /// infeasible-start mode). Entry 0 is the starting point.
    pub objective_history: Vec<f64>,
    /// Total slack after each full iteration (infeasible-start mode only).
    pub slack_history: Vec<f64>,
    pub values: Assignment,
    /// Last one-iteration objective gap.
    pub final_gap: Option<f64>,
    /// Total slack at the final point (infeasible-start mode only).
    pub total_slack: Option<f64>,
    pub init: Option<InitSummary>,
    /// Cone solver iterations summed over all subproblems.
    pub cone_iterations: usize,
    pub wall_time: Duration,
    pub message: Option<String>,
}

impl SolveReport {
    pub(crate) fn failed(status: SolveStatus, message: String) -> Self {
        Self {
            status,
            objective: f64::NAN,
            iterations: 0,
            records: Vec::new(),
            objective_history: Vec::new(),
            slack_history: Vec::new(),
            values: Assignment::new(),
            final_gap: None,
            total_slack: None,
            init: None,
            cone_iterations: 0,
            wall_time: Duration::ZERO,
            message: Some(message),
        }
    }
}
