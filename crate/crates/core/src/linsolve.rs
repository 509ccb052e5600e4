//! Sparse matrix helpers and a reusable sparse LU factorization.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par};

use crate::error::{Error, Result};

pub type SparseMatrix = SparseColMat<usize, f64>;

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletList {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        TripletList { nrows, ncols, entries: Vec::with_capacity(capacity) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.entries.push(Triplet::new(row, col, val));
    }

    pub fn build(&self) -> Result<SparseMatrix> {
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .map_err(|e| Error::InvalidArgument(format!("sparse build failed: {e:?}")))
    }
}

/// `y = A x`.
pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let a = a.as_ref();
    let col_ptr = a.symbolic().col_ptr();
    let row_idx = a.symbolic().row_idx();
    let val = a.val();
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        for k in col_ptr[j]..col_ptr[j + 1] {
            y[row_idx[k]] += val[k] * xj;
        }
    }
    y
}

/// `y = A^T x`.
pub fn matvec_transpose(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), x.len());
    let a = a.as_ref();
    let col_ptr = a.symbolic().col_ptr();
    let row_idx = a.symbolic().row_idx();
    let val = a.val();
    (0..a.ncols()).map(|j| (col_ptr[j]..col_ptr[j + 1]).map(|k| val[k] * x[row_idx[k]]).sum()).collect()
}

/// `x^T A y`.
pub fn bilinear(a: &SparseMatrix, x: &[f64], y: &[f64]) -> f64 {
    matvec(a, y).iter().zip(x).map(|(u, v)| u * v).sum()
}

/// All stored entries as `(row, col, value)`.
pub fn entries(a: &SparseMatrix) -> Vec<(usize, usize, f64)> {
    let a = a.as_ref();
    let col_ptr = a.symbolic().col_ptr();
    let row_idx = a.symbolic().row_idx();
    let val = a.val();
    let mut out = Vec::with_capacity(val.len());
    for j in 0..a.ncols() {
        for k in col_ptr[j]..col_ptr[j + 1] {
            out.push((row_idx[k], j, val[k]));
        }
    }
    out
}

pub fn to_dense(a: &SparseMatrix) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(a.nrows(), a.ncols());
    for (i, j, v) in entries(a) {
        m[(i, j)] += v;
    }
    m
}

/// Explicit transpose.
pub fn transpose(a: &SparseMatrix) -> SparseMatrix {
    let mut t = TripletList::new(a.ncols(), a.nrows());
    for (i, j, v) in entries(a) {
        t.push(j, i, v);
    }
    t.build().expect("transpose of a valid matrix")
}

/// Largest absolute entry difference between two matrices of equal shape.
pub fn max_abs_difference(a: &SparseMatrix, b: &SparseMatrix) -> f64 {
    let (da, db) = (to_dense(a), to_dense(b));
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((da[(i, j)] - db[(i, j)]).abs());
        }
    }
    m
}

/// Sparse LU with partial pivoting whose symbolic analysis is reused while
/// the sparsity pattern stays the same.
#[derive(Debug)]
pub struct SparseLu {
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

fn lu_error(e: impl std::fmt::Debug) -> Error {
    Error::LinearSolveSingular(format!("{e:?}"))
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("LU needs a square matrix".into()));
        }
        let symbolic = factorize_symbolic_lu(a.symbolic(), LuSymbolicParams::default()).map_err(lu_error)?;
        let mut lu = SparseLu {
            symbolic,
            numeric: NumericLu::new(),
            col_ptr: a.symbolic().col_ptr().to_vec(),
            row_idx: a.symbolic().row_idx().to_vec(),
        };
        lu.numeric_factor(a)?;
        Ok(lu)
    }

    fn numeric_factor(&mut self, a: &SparseMatrix) -> Result<()> {
        let req = self.symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(req).map_err(lu_error)?;
        self.symbolic
            .factorize_numeric_lu(&mut self.numeric, a.as_ref(), Par::Seq, MemStack::new(&mut mem), Default::default())
            .map_err(lu_error)?;
        Ok(())
    }

    /// New numeric factorization; repeats the symbolic step only if the
    /// pattern changed.
    pub fn refactor(&mut self, a: &SparseMatrix) -> Result<()> {
        if a.symbolic().col_ptr() != self.col_ptr.as_slice() || a.symbolic().row_idx() != self.row_idx.as_slice() {
            *self = SparseLu::factor(a)?;
            return Ok(());
        }
        self.numeric_factor(a)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let mut mem = MemBuffer::try_new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq)).map_err(lu_error)?;
        LuRef::<'_, usize, f64>::new_unchecked(&self.symbolic, &self.numeric).solve_in_place_with_conj(
            Conj::No,
            rhs.as_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
        let x: Vec<f64> = (0..b.len()).map(|i| rhs[(i, 0)]).collect();
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::LinearSolveSingular("non-finite solution".into()))
        }
    }
}

/// One-shot sparse solve `A x = b`.
pub fn solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SparseLu::factor(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        let mut t = TripletList::new(3, 3);
        t.push(0, 0, 4.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 3.0);
        t.push(2, 2, 1.0);
        t.push(2, 2, 1.0);
        t.push(1, 2, -1.0);
        t.build().unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let d = to_dense(&sample());
        assert_eq!(d[(2, 2)], 2.0);
    }

    #[test]
    fn products_and_transpose() {
        let a = sample();
        let x = [1.0, -2.0, 0.5];
        assert_eq!(matvec(&a, &x), vec![2.0, -5.5, 1.0]);
        assert_eq!(matvec_transpose(&a, &x), matvec(&transpose(&a), &x));
        assert_eq!(max_abs_difference(&transpose(&transpose(&a)), &a), 0.0);
    }

    #[test]
    fn lu_solves_and_refactors() {
        let a = sample();
        let b = [1.0, 2.0, 3.0];
        let mut lu = SparseLu::factor(&a).unwrap();
        let x = lu.solve(&b).unwrap();
        let r = matvec(&a, &x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-14);
        }
        let mut t = TripletList::new(3, 3);
        for (i, j, v) in entries(&a) {
            t.push(i, j, 2.0 * v);
        }
        let a2 = t.build().unwrap();
        lu.refactor(&a2).unwrap();
        let x2 = lu.solve(&b).unwrap();
        for i in 0..3 {
            assert!((2.0 * x2[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut t = TripletList::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let a = t.build().unwrap();
        let r = SparseLu::factor(&a).and_then(|lu| lu.solve(&[1.0, 2.0]));
        assert!(matches!(r, Err(Error::LinearSolveSingular(_))));
    }
}
