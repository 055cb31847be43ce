//! Optimization kernels: weighted nonnegative least squares with a common
//! lower bound, linear programming by revised simplex, and small binary
//! programs by branch-and-bound.

mod bnb;
mod lp;
mod nnls;

pub use bnb::{binary_max, BinarySolution, CoverConstraint};
pub use lp::{lp, LinProgProblem, LpSolution, LpStatus};
pub use nnls::{nnls, NnlsSolution, NnlsSolver, QuadProjectionProblem};

/// Solver tolerances, shared by every kernel.
#[derive(Copy, Clone, Debug, PartialEq, serde::Serialize)]
pub struct Tolerances {
    /// Primal feasibility of LP solutions.
    pub feasibility: f64,
    /// KKT residual of projections and LP reduced costs.
    pub kkt: f64,
    /// Distance from 0/1 accepted as integral in branch-and-bound.
    pub integrality: f64,
    /// Relative threshold for rank decisions.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            kkt: 1e-9,
            integrality: 1e-6,
            rank: 1e-10,
        }
    }
}

/// Column access to a linear operator. Solvers only ever touch a matrix
/// through this trait, so structured matrices can provide fast products.
pub trait ColumnOps {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// Writes column `j` into `out` (length `nrows`).
    fn column(&self, j: usize, out: &mut [f64]);
    /// `out[j] = column_j · v` for every column.
    fn tmul(&self, v: &[f64], out: &mut [f64]);
    /// `out += alpha * column_j`.
    fn axpy_column(&self, j: usize, alpha: f64, out: &mut [f64]);

    /// Sum of all columns.
    fn column_sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for j in 0..self.ncols() {
            self.axpy_column(j, 1.0, &mut out);
        }
        out
    }

    /// `M x`.
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                self.axpy_column(j, xj, &mut out);
            }
        }
        out
    }
}

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols, "ragged rows");
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Builds from any column operator.
    pub fn from_ops<M: ColumnOps + ?Sized>(m: &M) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            m.column(j, out.col_mut(j));
        }
        out
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.cols);
        for j in 0..self.cols {
            for (k, &i) in rows.iter().enumerate() {
                out.set(k, j, self.get(i, j));
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }
}

impl ColumnOps for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.col(j));
    }

    fn tmul(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(j), v);
        }
    }

    fn axpy_column(&self, j: usize, alpha: f64, out: &mut [f64]) {
        for (o, &a) in out.iter_mut().zip(self.col(j)) {
            *o += alpha * a;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerical rank of the given columns by modified Gram-Schmidt with
/// reorthogonalization; a column counts when its residual norm exceeds
/// `rel_tol` times its original norm.
pub fn column_rank(columns: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in columns {
        let norm0 = dot(c, c).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &basis {
                let r = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > rel_tol * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis.len()
}
