//! Operator-splitting solver.
//!
//! Writing `z = Ax`, the constraint `Ax + s = b, s in K` becomes `z in C` with
//! `C = b - K`. The iteration alternates between an equality-constrained
//! quadratic step, solved with one pre-factored quasi-definite KKT system
//!
//! ```text
//! [ P + sigma I     A'       ] [ x~ ]   [ sigma x - q   ]
//! [ A           -diag(1/rho) ] [ nu ] = [ z - y / rho   ]
//! ```
//!
//! and a Euclidean projection onto `C`, followed by a scaled dual update.
//! Data is equilibrated (modified Ruiz) before iterating; all residuals and
//! certificates are evaluated on the unscaled problem.

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;

use super::cone::{project_dual_in_place, project_in_place};
use super::ldl::LdlFactor;
use super::sparse::{self, dot, norm_inf};
use super::{Cone, ConeProgram, ConeSolution, ConeStatus, SolverError, SolverSettings};

const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE: usize = 5;
/// Residual factor (relative to tolerance) below which early polishing is tried.
const POLISH_EARLY: f64 = 100.0;
const POLISH_EARLY_GAP: usize = 200;
/// Polishing is also attempted this often regardless of the residuals.
const POLISH_PERIOD: usize = 1000;
/// A residual check counts as progress when it improves the best merit by this factor.
const STALL_PROGRESS: f64 = 0.9;
const CERTIFICATE_CHECKS: usize = 2;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Refactor only when the suggested step size moves by more than this factor.
const RHO_CHANGE: f64 = 5.0;

struct Blocks {
    cones: Vec<(Cone, usize)>,
}

impl Blocks {
    fn new(cones: &[Cone]) -> Self {
        let mut offset = 0;
        let cones = cones
            .iter()
            .map(|c| {
                let start = offset;
                offset += c.dim();
                (*c, start)
            })
            .collect();
        Self { cones }
    }

    fn iter(&self) -> impl Iterator<Item = (&Cone, std::ops::Range<usize>)> {
        self.cones.iter().map(|(c, s)| (c, *s..*s + c.dim()))
    }

    fn project(&self, v: &mut [f64]) -> Result<(), SolverError> {
        for (cone, range) in self.iter() {
            project_in_place(cone, &mut v[range])?;
        }
        Ok(())
    }

    fn project_dual(&self, v: &mut [f64]) -> Result<(), SolverError> {
        for (cone, range) in self.iter() {
            project_dual_in_place(cone, &mut v[range])?;
        }
        Ok(())
    }

    /// `v <- b - proj_K(b - v)`
    fn project_shifted(&self, b: &[f64], v: &mut [f64]) -> Result<(), SolverError> {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = b[i] - *vi;
        }
        self.project(v)?;
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = b[i] - *vi;
        }
        Ok(())
    }
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

impl Scaling {
    fn compute(p: &CscMatrix<f64>, a: &CscMatrix<f64>, q: &[f64], blocks: &Blocks, iters: usize) -> Self {
        let (n, m) = (a.ncols(), a.nrows());
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut ps = p.clone();
        let mut as_ = a.clone();
        for _ in 0..iters {
            let mut col = vec![0.0; n];
            let mut row = vec![0.0; m];
            let mut p_row = vec![0.0; n];
            sparse::abs_max_by_axis(&ps, &mut col, &mut p_row);
            for (c, r) in col.iter_mut().zip(&p_row) {
                *c = c.max(*r);
            }
            sparse::abs_max_by_axis(&as_, &mut col, &mut row);
            let dd: Vec<f64> = col.iter().map(|&v| equilibrate(v)).collect();
            let mut de: Vec<f64> = row.iter().map(|&v| equilibrate(v)).collect();
            for (cone, range) in blocks.iter() {
                if matches!(cone, Cone::Soc(_)) && !range.is_empty() {
                    let norm = range.clone().map(|i| row[i]).fold(0.0, f64::max);
                    let s = equilibrate(norm);
                    de[range].iter_mut().for_each(|v| *v = s);
                }
            }
            ps = sparse::scale(&ps, &dd, &dd);
            as_ = sparse::scale(&as_, &de, &dd);
            d.iter_mut().zip(&dd).for_each(|(a, b)| *a *= b);
            e.iter_mut().zip(&de).for_each(|(a, b)| *a *= b);
        }
        let mut col = vec![0.0; n];
        let mut row = vec![0.0; n];
        sparse::abs_max_by_axis(&ps, &mut col, &mut row);
        let p_mean = if n > 0 {
            col.iter().zip(&row).map(|(a, b)| a.max(*b)).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let q_norm = q.iter().zip(&d).fold(0.0f64, |acc, (qi, di)| acc.max((qi * di).abs()));
        let denom = p_mean.max(q_norm);
        let cost = if denom < SCALE_MIN {
            1.0
        } else {
            (1.0 / denom).clamp(SCALE_MIN, SCALE_MAX)
        };
        Self { d, e, cost }
    }
}

fn equilibrate(norm: f64) -> f64 {
    if norm < SCALE_MIN {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(SCALE_MIN, SCALE_MAX)
    }
}

/// Unscaled problem data and residual evaluation.
struct Original<'a> {
    cp: &'a ConeProgram,
    p: CscMatrix<f64>,
    blocks: &'a Blocks,
}

struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
    /// Scales the relative parts of the tolerances were computed from.
    primal_scale: f64,
    dual_scale: f64,
}

impl Residuals {
    fn within(&self, tol: f64) -> bool {
        self.primal <= tol * (1.0 + self.primal_scale) && self.dual <= tol * (1.0 + self.dual_scale)
    }
}

impl Original<'_> {
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64], st: &SolverSettings) -> Residuals {
        let (n, m) = (x.len(), z.len());
        let mut ax = vec![0.0; m];
        sparse::mul(&self.cp.a, x, &mut ax);
        let mut px = vec![0.0; n];
        sparse::sym_upper_mul(&self.p, x, &mut px);
        let mut aty = vec![0.0; n];
        sparse::mul_t(&self.cp.a, y, &mut aty);
        let q = self.cp.c.as_slice();

        let primal = ax.iter().zip(z).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let dual = (0..n).fold(0.0f64, |acc, i| acc.max((px[i] + q[i] + aty[i]).abs()));
        let primal_scale = norm_inf(&ax).max(norm_inf(z));
        let dual_scale = norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(q));
        Residuals {
            primal,
            dual,
            eps_primal: st.tol_abs + st.tol_rel * primal_scale,
            eps_dual: st.tol_abs + st.tol_rel * dual_scale,
            primal_scale,
            dual_scale,
        }
    }

    fn primal_infeasible(&self, dy: &[f64], eps: f64) -> Result<bool, SolverError> {
        let ny = norm_inf(dy);
        if ny < 1e-30 {
            return Ok(false);
        }
        let mut projected = dy.to_vec();
        self.blocks.project_dual(&mut projected)?;
        let dist = dy
            .iter()
            .zip(&projected)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if dist > eps * ny {
            return Ok(false);
        }
        let mut aty = vec![0.0; self.cp.num_vars()];
        sparse::mul_t(&self.cp.a, &projected, &mut aty);
        Ok(norm_inf(&aty) <= eps * ny && dot(self.cp.b.as_slice(), &projected) < -eps * ny)
    }

    fn dual_infeasible(&self, dx: &[f64], eps: f64) -> Result<bool, SolverError> {
        let nx = norm_inf(dx);
        if nx < 1e-30 {
            return Ok(false);
        }
        if dot(self.cp.c.as_slice(), dx) >= -eps * nx {
            return Ok(false);
        }
        let mut pdx = vec![0.0; dx.len()];
        sparse::sym_upper_mul(&self.p, dx, &mut pdx);
        if norm_inf(&pdx) > eps * nx {
            return Ok(false);
        }
        let mut w = vec![0.0; self.cp.num_rows()];
        sparse::mul(&self.cp.a, dx, &mut w);
        w.iter_mut().for_each(|v| *v = -*v);
        let mut projected = w.clone();
        self.blocks.project(&mut projected)?;
        let dist = w
            .iter()
            .zip(&projected)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        Ok(dist <= eps * nx)
    }
}

pub(super) fn solve(cp: &ConeProgram, st: &SolverSettings) -> Result<ConeSolution, SolverError> {
    cp.validate()?;
    if cp.cones.iter().any(|c| matches!(c, Cone::Psd(_))) {
        return Err(SolverError::Unsupported("psd cone".into()));
    }
    let (n, m) = (cp.num_vars(), cp.num_rows());
    let blocks = Blocks::new(&cp.cones);
    let p = cp.p.clone().unwrap_or_else(|| CscMatrix::zeros(n, n));
    let original = Original {
        cp,
        p: p.clone(),
        blocks: &blocks,
    };

    let scaling = Scaling::compute(&p, &cp.a, cp.c.as_slice(), &blocks, st.scaling_iters);
    let (d, e, cost) = (&scaling.d, &scaling.e, scaling.cost);
    let mut ps = sparse::scale(&p, d, d);
    ps.values_mut().iter_mut().for_each(|v| *v *= cost);
    let as_ = sparse::scale(&cp.a, e, d);
    let qs: Vec<f64> = (0..n).map(|i| cost * d[i] * cp.c[i]).collect();
    let bs: Vec<f64> = (0..m).map(|i| e[i] * cp.b[i]).collect();

    let mut rho = vec![st.rho; m];
    for (cone, range) in blocks.iter() {
        if matches!(cone, Cone::Zero(_)) {
            rho[range].iter_mut().for_each(|r| *r = st.rho * st.eq_rho_scale);
        }
    }

    let factorize = |rho: &[f64]| -> Result<LdlFactor, SolverError> {
        let factor = LdlFactor::new(&kkt_upper(&ps, &as_, st.sigma, rho))?;
        if factor.positive_pivots() != n {
            return Err(SolverError::Factorization("KKT matrix is not quasi-definite".into()));
        }
        Ok(factor)
    };
    let mut factor = factorize(&rho)?;
    let mut rho_base = st.rho;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    if let Some(x0) = &cp.warm_start {
        for i in 0..n {
            x[i] = x0[i] / d[i];
        }
        sparse::mul(&as_, &x, &mut z);
        blocks.project_shifted(&bs, &mut z)?;
    }
    let mut y = vec![0.0; m];
    let mut x_prev = vec![0.0; n];
    let mut y_prev = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut z_relax = vec![0.0; m];
    let alpha = st.alpha;
    let check = st.check_interval.max(1);

    let mut status = ConeStatus::MaxIters;
    let mut iterations = 0;
    let mut primal_streak = 0;
    let mut dual_streak = 0;
    let mut last = None;
    let mut next_polish = 0;
    let mut best_merit = f64::INFINITY;
    let mut best_iter = 0;

    for iter in 1..=st.max_iters {
        iterations = iter;
        x_prev.copy_from_slice(&x);
        y_prev.copy_from_slice(&y);

        for i in 0..n {
            rhs[i] = st.sigma * x[i] - qs[i];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho[i];
        }
        factor.solve_in_place(&mut rhs);
        for i in 0..n {
            x[i] = alpha * rhs[i] + (1.0 - alpha) * x[i];
        }
        for i in 0..m {
            let z_tilde = z[i] + (rhs[n + i] - y[i]) / rho[i];
            z_relax[i] = alpha * z_tilde + (1.0 - alpha) * z[i];
            z[i] = z_relax[i] + y[i] / rho[i];
        }
        blocks.project_shifted(&bs, &mut z)?;
        for i in 0..m {
            y[i] += rho[i] * (z_relax[i] - z[i]);
        }

        if iter % check != 0 && iter != st.max_iters {
            continue;
        }
        let (xu, zu, yu) = unscale(&x, &z, &y, &scaling);
        let res = original.residuals(&xu, &zu, &yu, st);
        let converged = res.primal <= res.eps_primal && res.dual <= res.eps_dual;
        if converged {
            last = Some((xu, zu, yu, res));
            status = ConeStatus::Optimal;
            break;
        }
        // Close to tolerance but stalling: an exact active-set solve often finishes the job.
        let near = res.primal <= POLISH_EARLY * res.eps_primal && res.dual <= POLISH_EARLY * res.eps_dual;
        if st.polish && (near || iter % POLISH_PERIOD == 0) && iter >= next_polish {
            next_polish = iter + POLISH_EARLY_GAP;
            if let Some(sol) = polish(&original, &xu, &zu, &yu, &res, st)? {
                if sol.primal_residual <= res.eps_primal && sol.dual_residual <= res.eps_dual {
                    return Ok(ConeSolution { iterations, ..sol });
                }
            }
        }
        let merit = (res.primal / res.eps_primal).max(res.dual / res.eps_dual);
        if merit < best_merit * STALL_PROGRESS {
            best_merit = merit;
            best_iter = iter;
        } else if iter - best_iter >= st.stall_iters && res.within(st.tol_reduced) {
            last = Some((xu, zu, yu, res));
            status = ConeStatus::OptimalInaccurate;
            break;
        }
        last = Some((xu, zu, yu, res));

        if st.adaptive_rho && iter % (check * st.adaptive_rho_interval.max(1)) == 0 {
            let suggested = (rho_base * residual_balance(&ps, &as_, &qs, &x, &z, &y)).clamp(RHO_MIN, RHO_MAX);
            if suggested > rho_base * RHO_CHANGE || suggested < rho_base / RHO_CHANGE {
                for r in rho.iter_mut() {
                    *r *= suggested / rho_base;
                }
                rho_base = suggested;
                factor = factorize(&rho)?;
            }
        }

        let dy: Vec<f64> = (0..m).map(|i| e[i] * (y[i] - y_prev[i]) / cost).collect();
        let dx: Vec<f64> = (0..n).map(|i| d[i] * (x[i] - x_prev[i])).collect();
        primal_streak = if original.primal_infeasible(&dy, st.infeasibility_tol)? {
            primal_streak + 1
        } else {
            0
        };
        dual_streak = if original.dual_infeasible(&dx, st.infeasibility_tol)? {
            dual_streak + 1
        } else {
            0
        };
        if primal_streak >= CERTIFICATE_CHECKS {
            status = ConeStatus::Infeasible;
            break;
        }
        if dual_streak >= CERTIFICATE_CHECKS {
            status = ConeStatus::Unbounded;
            break;
        }
    }

    let (xu, zu, yu, res) = match last {
        Some(v) => v,
        None => {
            let (xu, zu, yu) = unscale(&x, &z, &y, &scaling);
            let res = original.residuals(&xu, &zu, &yu, st);
            (xu, zu, yu, res)
        }
    };

    if status == ConeStatus::Optimal && st.polish {
        if let Some(sol) = polish(&original, &xu, &zu, &yu, &res, st)? {
            return Ok(ConeSolution { iterations, ..sol });
        }
    }

    let s: Vec<f64> = (0..m).map(|i| cp.b[i] - zu[i]).collect();
    let x = DVector::from_vec(xu);
    Ok(ConeSolution {
        status,
        objective: cp.objective(&x),
        x,
        s: DVector::from_vec(s),
        y: DVector::from_vec(yu),
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations,
        polished: false,
    })
}

/// `sqrt` of the ratio of relative primal to relative dual residuals in the
/// scaled problem; multiplying `rho` by it balances the two.
fn residual_balance(p: &CscMatrix<f64>, a: &CscMatrix<f64>, q: &[f64], x: &[f64], z: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len(), z.len());
    let mut ax = vec![0.0; m];
    sparse::mul(a, x, &mut ax);
    let mut px = vec![0.0; n];
    sparse::sym_upper_mul(p, x, &mut px);
    let mut aty = vec![0.0; n];
    sparse::mul_t(a, y, &mut aty);
    let primal = ax.iter().zip(z).fold(0.0f64, |acc, (u, v)| acc.max((u - v).abs()));
    let dual = (0..n).fold(0.0f64, |acc, i| acc.max((px[i] + q[i] + aty[i]).abs()));
    let primal_rel = primal / norm_inf(&ax).max(norm_inf(z)).max(1e-30);
    let dual_rel = dual / norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(q)).max(1e-30);
    if primal_rel == 0.0 || dual_rel == 0.0 {
        return 1.0;
    }
    (primal_rel / dual_rel).sqrt()
}

fn unscale(x: &[f64], z: &[f64], y: &[f64], sc: &Scaling) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let xu = x.iter().zip(&sc.d).map(|(a, b)| a * b).collect();
    let zu = z.iter().zip(&sc.e).map(|(a, b)| a / b).collect();
    let yu = y.iter().zip(&sc.e).map(|(a, b)| a * b / sc.cost).collect();
    (xu, zu, yu)
}

fn kkt_upper(p: &CscMatrix<f64>, a: &CscMatrix<f64>, sigma: f64, rho: &[f64]) -> CscMatrix<f64> {
    let (n, m) = (a.ncols(), a.nrows());
    let mut triplets = Vec::with_capacity(p.nnz() + a.nnz() + n + m);
    for (i, j, &v) in p.triplet_iter() {
        if i <= j {
            triplets.push((i, j, v));
        }
    }
    for i in 0..n {
        triplets.push((i, i, sigma));
    }
    for (i, j, &v) in a.triplet_iter() {
        triplets.push((j, n + i, v));
    }
    for (i, r) in rho.iter().enumerate() {
        triplets.push((n + i, n + i, -1.0 / r));
    }
    sparse::from_triplets(n + m, n + m, &triplets)
}

/// Guess the active set from the ADMM iterate and solve the resulting
/// equality-constrained QP exactly. Only for programs without second-order cones.
fn polish(
    orig: &Original<'_>,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    admm: &Residuals,
    st: &SolverSettings,
) -> Result<Option<ConeSolution>, SolverError> {
    let cp = orig.cp;
    let (n, m) = (x.len(), z.len());
    let b = cp.b.as_slice();

    let mut active = Vec::new();
    let mut is_eq = vec![false; m];
    for (cone, range) in orig.blocks.iter() {
        for i in range.clone() {
            match cone {
                Cone::Zero(_) => {
                    is_eq[i] = true;
                    active.push(i);
                }
                // Only strictly interior second-order blocks, which drop out.
                Cone::Soc(_) => {
                    let slack: Vec<f64> = range.clone().map(|r| b[r] - z[r]).collect();
                    let margin = slack[0] - dot(&slack[1..], &slack[1..]).sqrt();
                    if margin <= dot(&y[range.clone()], &y[range.clone()]).sqrt() {
                        return Ok(None);
                    }
                    break;
                }
                _ => {
                    if b[i] - z[i] < y[i] {
                        active.push(i);
                    }
                }
            }
        }
    }
    let k = active.len();
    let mut row_map = vec![usize::MAX; m];
    for (r, &i) in active.iter().enumerate() {
        row_map[i] = r;
    }
    let mut a_act = Vec::new();
    for (i, j, &v) in cp.a.triplet_iter() {
        if row_map[i] != usize::MAX {
            a_act.push((row_map[i], j, v));
        }
    }
    let a_act = sparse::from_triplets(k, n, &a_act);

    let mut triplets = Vec::new();
    for (i, j, &v) in orig.p.triplet_iter() {
        if i <= j {
            triplets.push((i, j, v));
        }
    }
    for i in 0..n {
        triplets.push((i, i, POLISH_DELTA));
    }
    for (i, j, &v) in a_act.triplet_iter() {
        triplets.push((j, n + i, v));
    }
    for i in 0..k {
        triplets.push((n + i, n + i, -POLISH_DELTA));
    }
    let factor = match LdlFactor::new(&sparse::from_triplets(n + k, n + k, &triplets)) {
        Ok(f) => f,
        Err(_) => return Ok(None),
    };

    let mut rhs = vec![0.0; n + k];
    for (r, c) in rhs.iter_mut().zip(cp.c.iter()) {
        *r = -c;
    }
    for (r, &i) in active.iter().enumerate() {
        rhs[n + r] = b[i];
    }
    // The regularization pulls the first solve toward the ADMM iterate, which
    // picks the nearby solution when the active-set system is singular.
    let mut sol = rhs.clone();
    for i in 0..n {
        sol[i] += POLISH_DELTA * x[i];
    }
    factor.solve_in_place(&mut sol);
    for _ in 0..POLISH_REFINE {
        // residual against the unregularized KKT matrix
        let mut kx = vec![0.0; n + k];
        let (sx, sy) = sol.split_at(n);
        let mut px = vec![0.0; n];
        sparse::sym_upper_mul(&orig.p, sx, &mut px);
        let mut aty = vec![0.0; n];
        sparse::mul_t(&a_act, sy, &mut aty);
        let mut ax = vec![0.0; k];
        sparse::mul(&a_act, sx, &mut ax);
        for i in 0..n {
            kx[i] = px[i] + aty[i];
        }
        kx[n..].copy_from_slice(&ax);
        let mut delta: Vec<f64> = rhs.iter().zip(&kx).map(|(a, b)| a - b).collect();
        factor.solve_in_place(&mut delta);
        sol.iter_mut().zip(&delta).for_each(|(s, d)| *s += d);
    }

    let xp = sol[..n].to_vec();
    let mut yp = vec![0.0; m];
    for (r, &i) in active.iter().enumerate() {
        yp[i] = if is_eq[i] { sol[n + r] } else { sol[n + r].max(0.0) };
    }
    let mut zp = vec![0.0; m];
    sparse::mul(&cp.a, &xp, &mut zp);
    orig.blocks.project_shifted(b, &mut zp)?;

    let res = orig.residuals(&xp, &zp, &yp, st);
    let tiny = 1e-10;
    let better_primal = res.primal <= admm.primal || res.primal < tiny;
    let better_dual = res.dual <= admm.dual || res.dual < tiny;
    if !(better_primal && better_dual) {
        return Ok(None);
    }
    let s: Vec<f64> = (0..m).map(|i| b[i] - zp[i]).collect();
    let x = DVector::from_vec(xp);
    Ok(Some(ConeSolution {
        status: ConeStatus::Optimal,
        objective: cp.objective(&x),
        x,
        s: DVector::from_vec(s),
        y: DVector::from_vec(yp),
        primal_residual: res.primal,
        dual_residual: res.dual,
        iterations: 0,
        polished: true,
    }))
}
