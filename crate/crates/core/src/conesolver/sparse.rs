//! Small kernels over compressed-column matrices.

use nalgebra_sparse::{CooMatrix, CscMatrix};

/// `y = A x`
pub fn mul(a: &CscMatrix<f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    let (offsets, rows, vals) = (a.col_offsets(), a.row_indices(), a.values());
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for k in offsets[j]..offsets[j + 1] {
            y[rows[k]] += vals[k] * xj;
        }
    }
}

/// `y = A' x`
pub fn mul_t(a: &CscMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, rows, vals) = (a.col_offsets(), a.row_indices(), a.values());
    for (j, yj) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in offsets[j]..offsets[j + 1] {
            acc += vals[k] * x[rows[k]];
        }
        *yj = acc;
    }
}

/// `y = P x` where only the upper triangle of the symmetric `P` is stored.
pub fn sym_upper_mul(p: &CscMatrix<f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    let (offsets, rows, vals) = (p.col_offsets(), p.row_indices(), p.values());
    for j in 0..p.ncols() {
        for k in offsets[j]..offsets[j + 1] {
            let i = rows[k];
            y[i] += vals[k] * x[j];
            if i != j {
                y[j] += vals[k] * x[i];
            }
        }
    }
}

/// Scale rows by `left` and columns by `right`: `diag(left) A diag(right)`.
pub fn scale(a: &CscMatrix<f64>, left: &[f64], right: &[f64]) -> CscMatrix<f64> {
    let mut out = a.clone();
    let offsets = out.col_offsets().to_vec();
    let rows = out.row_indices().to_vec();
    let vals = out.values_mut();
    for j in 0..right.len() {
        for k in offsets[j]..offsets[j + 1] {
            vals[k] *= left[rows[k]] * right[j];
        }
    }
    out
}

/// Column-wise infinity norms of `A`, accumulated with `max` into `col` and
/// row-wise into `row`.
pub fn abs_max_by_axis(a: &CscMatrix<f64>, col: &mut [f64], row: &mut [f64]) {
    let (offsets, rows, vals) = (a.col_offsets(), a.row_indices(), a.values());
    for j in 0..a.ncols() {
        for k in offsets[j]..offsets[j + 1] {
            let v = vals[k].abs();
            col[j] = col[j].max(v);
            row[rows[k]] = row[rows[k]].max(v);
        }
    }
}

/// Build a CSC matrix from triplets, summing duplicates.
pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CscMatrix::from(&coo)
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
