//! Alternating convex search: plain and proximal updates, the feasible-start
//! search, and the infeasible-start penalty method.

use std::time::Instant;

use serde::Serialize;

use crate::canon::{canonicalize, recover, CanonError};
use crate::conesolver::{Cone, ConeProgram, ConeSolver, ConeStatus};
use crate::expr::{Assignment, ExprError};
use crate::problem::{
    initialize_missing, BiconvexProblem, ConstraintKind, InitSummary, SolveOptions, SolveReport, SolveStatus,
};
use crate::transform::{fix_block, relax_feasibility, relax_objective, scalarized_violation, SlackInfo};
use crate::verify::Block;

/// One half-step of the alternation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Iteration number, starting at 1.
    pub index: usize,
    pub half: Block,
    /// Optimal value of the convex subproblem, proximal term included.
    pub subproblem_objective: f64,
    /// Total slack after the step (relaxed solves only).
    pub total_slack: Option<f64>,
    pub solver_status: ConeStatus,
    pub cone_iterations: usize,
}

/// Total constraint violation at a point: positive parts for inequalities
/// (`max(||x|| - t, 0)` for a second-order cone, the largest eigenvalue for a
/// semidefinite one) and absolute residuals for equalities.
pub fn violation(p: &BiconvexProblem, point: &Assignment) -> Result<f64, ExprError> {
    let mut total = 0.0;
    for c in p.constraints() {
        let left = c.left.eval(point, p.param_values())?;
        total += match c.kind {
            ConstraintKind::Cone(Cone::Nonneg(_)) => left.iter().map(|v| v.max(0.0)).sum(),
            ConstraintKind::Cone(Cone::Zero(_)) | ConstraintKind::Equality => left.iter().map(|v| v.abs()).sum(),
            ConstraintKind::Cone(cone) => scalarized_violation(cone, &left).max(0.0),
        };
    }
    Ok(total)
}

/// Smallest total slack `1's + ||t||_1` of the feasibility relaxation at a point.
fn minimal_slack(p: &BiconvexProblem, point: &Assignment) -> Result<f64, ExprError> {
    let mut total = 0.0;
    for c in p.constraints() {
        let left = c.left.eval(point, p.param_values())?;
        total += match c.kind {
            ConstraintKind::Cone(Cone::Zero(_)) | ConstraintKind::Equality => left.iter().map(|v| v.abs()).sum(),
            ConstraintKind::Cone(cone) => scalarized_violation(cone, &left).max(0.0),
        };
    }
    Ok(total)
}

/// Result of the feasible-start search.
#[derive(Debug, Clone)]
pub struct FeasibleStart {
    pub point: Assignment,
    pub found: bool,
    pub half_steps: usize,
    /// Minimal total slack at `point`.
    pub total_slack: f64,
    pub records: Vec<IterationRecord>,
    pub cone_iterations: usize,
}

/// A half-step that could not be completed.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub status: SolveStatus,
    pub message: String,
}

impl StepFailure {
    fn new(status: SolveStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<ExprError> for StepFailure {
    fn from(e: ExprError) -> Self {
        StepFailure::new(SolveStatus::SolverError, e.to_string())
    }
}

struct Step {
    subproblem_objective: f64,
    status: ConeStatus,
    iterations: usize,
}

/// Solve one block subproblem and write the new values into `point`.
fn half_step(
    p: &BiconvexProblem,
    block: Block,
    point: &mut Assignment,
    opts: &SolveOptions,
    solver: &dyn ConeSolver,
) -> Result<Step, StepFailure> {
    let context = |what: &str| format!("{block}-step: {what}");
    let sp = fix_block(p, block, point, opts.lbd, point)
        .map_err(|e| StepFailure::new(SolveStatus::SolverError, context(&e.to_string())))?;
    let (cp, recovery) = canonicalize(&sp).map_err(|e| match e {
        CanonError::InfeasibleConstant { .. } => {
            StepFailure::new(SolveStatus::SubproblemInfeasible, context(&e.to_string()))
        }
        e => StepFailure::new(SolveStatus::SolverError, context(&e.to_string())),
    })?;
    if cp.num_vars() == 0 {
        return Ok(Step {
            subproblem_objective: if recovery.negate {
                -recovery.offset
            } else {
                recovery.offset
            },
            status: ConeStatus::Optimal,
            iterations: 0,
        });
    }
    let cp = ConeProgram {
        warm_start: Some(recovery.warm_start(point)),
        ..cp
    };
    let sol = solver
        .solve(&cp, &opts.solver_settings)
        .map_err(|e| StepFailure::new(SolveStatus::SolverError, context(&e.to_string())))?;
    match sol.status {
        ConeStatus::Optimal | ConeStatus::OptimalInaccurate => {}
        ConeStatus::Infeasible => {
            return Err(StepFailure::new(
                SolveStatus::SubproblemInfeasible,
                context("subproblem is infeasible"),
            ))
        }
        ConeStatus::Unbounded => {
            return Err(StepFailure::new(
                SolveStatus::SubproblemUnbounded,
                context("subproblem is unbounded"),
            ))
        }
        ConeStatus::MaxIters => {
            return Err(StepFailure::new(
                SolveStatus::SolverError,
                context(&format!("cone solver stopped after {} iterations", sol.iterations)),
            ))
        }
    }
    let (values, objective) =
        recover(&recovery, &sol).map_err(|e| StepFailure::new(SolveStatus::SolverError, context(&e.to_string())))?;
    point.extend(values);
    Ok(Step {
        subproblem_objective: objective,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Search for a feasible point by alternating over the feasibility relaxation.
/// Stops once the minimal total slack drops to `opts.slack_tolerance`.
pub fn find_feasible(
    p: &BiconvexProblem,
    start: &Assignment,
    opts: &SolveOptions,
) -> Result<FeasibleStart, StepFailure> {
    let solver = opts
        .registry
        .get(&opts.solver)
        .map_err(|e| StepFailure::new(SolveStatus::SolverError, e.to_string()))?;
    let relaxed = relax_feasibility(p).map_err(|e| StepFailure::new(SolveStatus::SolverError, e.to_string()))?;
    let mut point = start.clone();
    relaxed.slacks.fill(p, &mut point)?;
    let mut out = FeasibleStart {
        total_slack: minimal_slack(p, &point)?,
        point: Assignment::new(),
        found: false,
        half_steps: 0,
        records: Vec::new(),
        cone_iterations: 0,
    };
    let no_prox = SolveOptions {
        lbd: 0.0,
        ..opts.clone()
    };
    let mut best = (out.total_slack, point.clone());
    'outer: for k in 1..=opts.init_max_iters {
        if out.total_slack <= opts.slack_tolerance {
            break;
        }
        for block in [Block::X, Block::Y] {
            let step = half_step(&relaxed.problem, block, &mut point, &no_prox, solver.as_ref())?;
            out.half_steps += 1;
            out.cone_iterations += step.iterations;
            out.total_slack = minimal_slack(p, &point)?;
            out.records.push(IterationRecord {
                index: k,
                half: block,
                subproblem_objective: step.subproblem_objective,
                total_slack: Some(out.total_slack),
                solver_status: step.status,
                cone_iterations: step.iterations,
            });
            if out.total_slack < best.0 {
                best = (out.total_slack, point.clone());
            }
            if out.total_slack <= opts.slack_tolerance {
                break 'outer;
            }
        }
    }
    out.found = best.0 <= opts.slack_tolerance;
    out.total_slack = best.0;
    out.point = strip(p, best.1);
    Ok(out)
}

/// Keep only the variables of `p`.
fn strip(p: &BiconvexProblem, mut point: Assignment) -> Assignment {
    point.retain(|id, _| p.variable(*id).is_some());
    point
}

/// The alternating loop shared by both solve modes. `slacks` is set when `p`
/// is a penalty relaxation.
fn alternate(
    p: &BiconvexProblem,
    mut point: Assignment,
    opts: &SolveOptions,
    slacks: Option<&SlackInfo>,
    report: &mut SolveReport,
) -> Result<Assignment, StepFailure> {
    let solver = opts
        .registry
        .get(&opts.solver)
        .map_err(|e| StepFailure::new(SolveStatus::SolverError, e.to_string()))?;
    let mut f = p.objective_value(&point)?;
    report.objective_history.push(f);
    report.status = SolveStatus::MaxIters;
    for k in 1..=opts.max_iters {
        let mut after_x = f;
        for block in [Block::X, Block::Y] {
            let step = match half_step(p, block, &mut point, opts, solver.as_ref()) {
                Ok(step) => step,
                Err(e) => {
                    report.iterations = k - 1;
                    return Err(StepFailure {
                        message: format!("iteration {k}, {}", e.message),
                        ..e
                    });
                }
            };
            f = p.objective_value(&point)?;
            report.objective_history.push(f);
            report.cone_iterations += step.iterations;
            let total_slack = slacks.map(|s| s.total_at(&point)).transpose()?;
            report.records.push(IterationRecord {
                index: k,
                half: block,
                subproblem_objective: step.subproblem_objective,
                total_slack,
                solver_status: step.status,
                cone_iterations: step.iterations,
            });
            if block == Block::X {
                after_x = f;
            }
        }
        report.iterations = k;
        if let Some(s) = slacks {
            report.slack_history.push(s.total_at(&point)?);
        }
        let gap = (f - after_x).abs();
        report.final_gap = Some(gap);
        if gap < opts.gap_tolerance {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    Ok(point)
}

fn empty_report() -> SolveReport {
    let mut r = SolveReport::failed(SolveStatus::MaxIters, String::new());
    r.message = None;
    r
}

fn finish(p: &BiconvexProblem, point: Assignment, report: &mut SolveReport) {
    let values = strip(p, point);
    report.objective = p.objective_value(&values).unwrap_or(f64::NAN);
    report.values = values;
}

/// Solve with alternating convex search. Starting values come from the
/// problem or from seeded random draws; an infeasible start first goes
/// through [`find_feasible`]. Problems built in relax mode are dispatched to
/// [`solve_infeasible_start`].
pub fn solve_acs(p: &BiconvexProblem, opts: &SolveOptions) -> SolveReport {
    if p.relax_mode() {
        return solve_infeasible_start(p, opts);
    }
    let started = Instant::now();
    if let Some(report) = precheck(p, opts) {
        return report;
    }
    let mut report = empty_report();
    let mut point = initialize_missing(p, opts.seed);
    let outcome = (|| -> Result<Assignment, StepFailure> {
        if violation(p, &point)? > opts.feas_tolerance {
            let init = find_feasible(p, &point, opts)?;
            report.cone_iterations += init.cone_iterations;
            report.init = Some(InitSummary {
                found: init.found,
                half_steps: init.half_steps,
                total_slack: init.total_slack,
            });
            if !init.found {
                report.message = Some(format!(
                    "no feasible start found in {} iterations (total slack {:e}); continuing from the best point",
                    opts.init_max_iters, init.total_slack
                ));
            }
            point.extend(init.point);
        }
        alternate(p, point.clone(), opts, None, &mut report)
    })();
    match outcome {
        Ok(final_point) => finish(p, final_point, &mut report),
        Err(e) => {
            report.status = e.status;
            report.message = Some(e.message);
            finish(p, point, &mut report);
        }
    }
    report.wall_time = started.elapsed();
    report
}

/// Alternating search over the penalty relaxation `f_0 + nu (1's + ||t||_1)`,
/// from any starting point. The report's objective history is the penalized
/// objective; its slack history holds the total slack after each iteration.
pub fn solve_infeasible_start(p: &BiconvexProblem, opts: &SolveOptions) -> SolveReport {
    let started = Instant::now();
    if let Some(report) = precheck(p, opts) {
        return report;
    }
    let mut report = empty_report();
    let start = initialize_missing(p, opts.seed);
    let outcome = (|| -> Result<(Assignment, SlackInfo), StepFailure> {
        let relaxed =
            relax_objective(p, opts.nu).map_err(|e| StepFailure::new(SolveStatus::SolverError, e.to_string()))?;
        let mut point = start.clone();
        relaxed.slacks.fill(p, &mut point)?;
        let point = alternate(&relaxed.problem, point, opts, Some(&relaxed.slacks), &mut report)?;
        Ok((point, relaxed.slacks))
    })();
    match outcome {
        Ok((point, slacks)) => {
            report.total_slack = slacks.total_at(&point).ok();
            finish(p, point, &mut report);
        }
        Err(e) => {
            report.status = e.status;
            report.message = Some(e.message);
            finish(p, start, &mut report);
        }
    }
    report.wall_time = started.elapsed();
    report
}

fn precheck(p: &BiconvexProblem, opts: &SolveOptions) -> Option<SolveReport> {
    if let Err(e) = opts.validate() {
        return Some(SolveReport::failed(SolveStatus::SolverError, e.to_string()));
    }
    if !p.is_dbcp() {
        let first = p
            .verdict()
            .diagnostics
            .first()
            .map(|d| d.to_string())
            .unwrap_or_default();
        return Some(SolveReport::failed(SolveStatus::NotDbcp, first));
    }
    None
}
