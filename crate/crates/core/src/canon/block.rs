//! Affine entries with optional squared terms, and matrix blocks of them.

use crate::expr::Shape;

/// `lin . x + c + sum_k w_k a_k^2`, where each `a_k` is a registered affine
/// alias.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Entry {
    pub lin: Vec<(usize, f64)>,
    pub c: f64,
    pub quad: Vec<(usize, f64)>,
}

impl Entry {
    pub fn constant(c: f64) -> Self {
        Self { c, ..Self::default() }
    }

    pub fn column(col: usize, coef: f64) -> Self {
        Self {
            lin: vec![(col, coef)],
            ..Self::default()
        }
    }

    pub fn is_affine(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.lin.is_empty() && self.quad.is_empty()
    }

    pub fn axpy(&mut self, k: f64, other: &Entry) {
        if k == 0.0 {
            return;
        }
        self.lin.extend(other.lin.iter().map(|&(j, v)| (j, k * v)));
        self.c += k * other.c;
        self.quad.extend(other.quad.iter().map(|&(j, v)| (j, k * v)));
    }

    pub fn scaled(&self, k: f64) -> Entry {
        let mut out = Entry::default();
        out.axpy(k, self);
        out
    }

    /// Sort terms by index and merge duplicates.
    pub fn normalize(&mut self) {
        merge(&mut self.lin);
        merge(&mut self.quad);
    }

    pub fn combination<'a>(items: impl IntoIterator<Item = (f64, &'a Entry)>) -> Entry {
        let mut out = Entry::default();
        for (k, e) in items {
            out.axpy(k, e);
        }
        out.normalize();
        out
    }
}

fn merge(terms: &mut Vec<(usize, f64)>) {
    if terms.len() < 2 {
        return;
    }
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for &(j, v) in terms.iter() {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    *terms = out;
}

/// How the lowered block relates to the expression it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Bound {
    /// Equal for every value of the columns.
    Exact,
    /// An upper bound, attainable by the auxiliary columns (epigraph).
    Upper,
    /// A lower bound, attainable by the auxiliary columns (hypograph).
    Lower,
}

impl Bound {
    pub fn flip(self) -> Bound {
        match self {
            Bound::Exact => Bound::Exact,
            Bound::Upper => Bound::Lower,
            Bound::Lower => Bound::Upper,
        }
    }

    pub fn join(self, other: Bound) -> Option<Bound> {
        match (self, other) {
            (Bound::Exact, b) | (b, Bound::Exact) => Some(b),
            (a, b) if a == b => Some(a),
            _ => None,
        }
    }

    /// Bound after applying coefficients with the given signs.
    pub fn through(self, coefs: impl IntoIterator<Item = f64>) -> Option<Bound> {
        if self == Bound::Exact {
            return Some(self);
        }
        let (mut pos, mut neg) = (false, false);
        for c in coefs {
            pos |= c > 0.0;
            neg |= c < 0.0;
        }
        match (pos, neg) {
            (true, true) => None,
            (false, true) => Some(self.flip()),
            _ => Some(self),
        }
    }
}

/// A matrix of entries stored column-major.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub shape: Shape,
    pub bound: Bound,
    pub e: Vec<Entry>,
}

impl Block {
    pub fn new(shape: Shape, bound: Bound, e: Vec<Entry>) -> Self {
        debug_assert_eq!(shape.size(), e.len());
        Self { shape, bound, e }
    }

    /// Entry `(i, j)` with scalar broadcasting.
    pub fn at(&self, i: usize, j: usize) -> &Entry {
        if self.e.len() == 1 {
            &self.e[0]
        } else {
            &self.e[i + j * self.shape.rows]
        }
    }

    pub fn is_affine(&self) -> bool {
        self.bound == Bound::Exact && self.e.iter().all(Entry::is_affine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_terms() {
        let mut e = Entry::column(3, 1.0);
        e.axpy(2.0, &Entry::column(1, 1.0));
        e.axpy(-1.0, &Entry::column(3, 1.0));
        e.normalize();
        assert_eq!(e.lin, vec![(1, 2.0)]);
    }

    #[test]
    fn bound_rules() {
        assert_eq!(Bound::Upper.through([1.0, 0.0]), Some(Bound::Upper));
        assert_eq!(Bound::Upper.through([-1.0]), Some(Bound::Lower));
        assert_eq!(Bound::Upper.through([-1.0, 1.0]), None);
        assert_eq!(Bound::Exact.through([-1.0, 1.0]), Some(Bound::Exact));
        assert_eq!(Bound::Upper.join(Bound::Lower), None);
        assert_eq!(Bound::Exact.join(Bound::Lower), Some(Bound::Lower));
    }
}
