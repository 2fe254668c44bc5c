//! Sparse LDL^T factorization for quasi-definite matrices.
//!
//! The matrix is supplied as the upper triangle of a symmetric matrix in
//! compressed-column form. A fill-reducing ordering is computed with AMD and
//! the factorization follows the elimination-tree based up-looking scheme,
//! which needs no pivoting for quasi-definite systems.

use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::SolverError;

const NONE: usize = usize::MAX;

/// Numeric LDL^T factor of `P K P^T`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
    positive: usize,
}

impl LdlFactor {
    /// Factor the symmetric matrix whose upper triangle is `upper`.
    pub fn new(upper: &CscMatrix<f64>) -> Result<Self, SolverError> {
        let n = upper.nrows();
        if upper.ncols() != n {
            return Err(SolverError::Factorization("matrix is not square".into()));
        }
        let perm = amd_ordering(upper)?;
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        let permuted = permute_upper(upper, &pinv);
        let (etree, lnz) = elimination_tree(&permuted)?;
        let mut factor = Self::numeric(&permuted, &etree, &lnz)?;
        factor.perm = perm;
        Ok(factor)
    }

    /// Number of strictly positive pivots.
    pub fn positive_pivots(&self) -> usize {
        self.positive
    }

    /// Solve `K x = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for k in self.lp[i]..self.lp[i + 1] {
                    x[self.li[k]] -= self.lx[k] * xi;
                }
            }
        }
        for (xi, d) in x.iter_mut().zip(&self.dinv) {
            *xi *= d;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[k] * x[self.li[k]];
            }
            x[i] = acc;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            rhs[p] = x[i];
        }
    }

    fn numeric(a: &CscMatrix<f64>, etree: &[usize], lnz: &[usize]) -> Result<Self, SolverError> {
        let n = a.nrows();
        let ap = a.col_offsets();
        let ai = a.row_indices();
        let ax = a.values();

        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];

        let mut used = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = lp[..n].to_vec();
        let mut positive = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            for p in ap[k]..ap[k + 1] {
                let row = ai[p];
                if row == k {
                    d[k] += ax[p];
                    continue;
                }
                y_vals[row] += ax[p];
                if used[row] {
                    continue;
                }
                used[row] = true;
                elim[0] = row;
                let mut depth = 1;
                let mut next = etree[row];
                while next != NONE && next < k {
                    if used[next] {
                        break;
                    }
                    used[next] = true;
                    elim[depth] = next;
                    depth += 1;
                    next = etree[next];
                }
                while depth > 0 {
                    depth -= 1;
                    y_idx[nnz_y] = elim[depth];
                    nnz_y += 1;
                }
            }

            for i in (0..nnz_y).rev() {
                let col = y_idx[i];
                let slot = next_space[col];
                let yc = y_vals[col];
                for j in lp[col]..slot {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[slot] = k;
                lx[slot] = yc * dinv[col];
                d[k] -= yc * lx[slot];
                next_space[col] += 1;
                y_vals[col] = 0.0;
                used[col] = false;
            }

            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(SolverError::Factorization(format!("zero pivot at column {k}")));
            }
            if d[k] > 0.0 {
                positive += 1;
            }
            dinv[k] = 1.0 / d[k];
        }

        Ok(Self {
            n,
            perm: Vec::new(),
            lp,
            li,
            lx,
            dinv,
            positive,
        })
    }
}

fn amd_ordering(upper: &CscMatrix<f64>) -> Result<Vec<usize>, SolverError> {
    let n = upper.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // The ordering only sees the pattern; a full diagonal keeps it well formed
    // when some columns are empty.
    let mut ap = Vec::with_capacity(n + 1);
    let mut ai = Vec::with_capacity(upper.nnz() + n);
    ap.push(0i64);
    let (offsets, rows) = (upper.col_offsets(), upper.row_indices());
    for j in 0..n {
        let col = &rows[offsets[j]..offsets[j + 1]];
        ai.extend(col.iter().map(|&i| i as i64));
        if !col.contains(&j) {
            ai.push(j as i64);
        }
        ap.push(ai.len() as i64);
    }
    let (p, _, _) = amd::order(n as i64, &ap, &ai, &amd::Control::default())
        .map_err(|status| SolverError::Factorization(format!("ordering failed: {status:?}")))?;
    Ok(p.into_iter().map(|v| v as usize).collect())
}

fn permute_upper(upper: &CscMatrix<f64>, pinv: &[usize]) -> CscMatrix<f64> {
    let n = upper.nrows();
    let mut coo = CooMatrix::new(n, n);
    for (i, j, &v) in upper.triplet_iter() {
        let (pi, pj) = (pinv[i], pinv[j]);
        let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
        coo.push(r, c, v);
    }
    CscMatrix::from(&coo)
}

fn elimination_tree(a: &CscMatrix<f64>) -> Result<(Vec<usize>, Vec<usize>), SolverError> {
    let n = a.nrows();
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    let ap = a.col_offsets();
    let ai = a.row_indices();
    for j in 0..n {
        work[j] = j;
        for &row in &ai[ap[j]..ap[j + 1]] {
            if row > j {
                return Err(SolverError::Factorization("input is not upper triangular".into()));
            }
            let mut i = row;
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    Ok((etree, lnz))
}
