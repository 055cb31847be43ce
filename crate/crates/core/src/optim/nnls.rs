//! Weighted nonnegative least squares with a common lower bound.
//!
//! Minimizes `(y − Mν)ᵀ Ω (y − Mν)` over `ν ≥ ℓ` with an active-set method.
//! Writing `ν = ℓ·1 + μ` turns the bound into `μ ≥ 0` with target
//! `y − ℓ·M1`. The least-squares subproblems are solved on `√Ω`-scaled
//! columns through a QR factorization that is updated when columns enter or
//! leave the support.

use super::{ColumnOps, Tolerances};
use crate::error::{Error, Result};

/// One projection problem.
#[derive(Clone, Copy, Debug)]
pub struct QuadProjectionProblem<'a, M: ColumnOps + ?Sized> {
    pub matrix: &'a M,
    pub target: &'a [f64],
    /// Diagonal of Ω, one positive entry per row.
    pub weights: &'a [f64],
    /// Every coordinate of ν is at least this.
    pub lower: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution {
    pub nu: Vec<f64>,
    /// `Mν`.
    pub fitted: Vec<f64>,
    pub objective: f64,
    /// Columns strictly above the lower bound.
    pub support: Vec<usize>,
    pub iterations: usize,
    /// Largest violation of the first-order conditions on the gradient.
    pub kkt_residual: f64,
    /// Objective after each outer iteration.
    pub trace: Vec<f64>,
}

/// Solves one problem from a cold start.
pub fn nnls<M: ColumnOps + ?Sized>(problem: &QuadProjectionProblem<'_, M>, tol: &Tolerances) -> Result<NnlsSolution> {
    NnlsSolver::new(problem.matrix, problem.weights.to_vec(), problem.lower, *tol)?.solve(problem.target, None)
}

/// A matrix, weights and lower bound prepared for repeated solves against
/// different targets.
pub struct NnlsSolver<'a, M: ColumnOps + ?Sized> {
    matrix: &'a M,
    weights: Vec<f64>,
    sqrt_w: Vec<f64>,
    lower: f64,
    shift: Vec<f64>,
    tol: Tolerances,
    max_iterations: usize,
}

impl<'a, M: ColumnOps + ?Sized> NnlsSolver<'a, M> {
    pub fn new(matrix: &'a M, weights: Vec<f64>, lower: f64, tol: Tolerances) -> Result<Self> {
        if weights.len() != matrix.nrows() {
            return Err(Error::validation(format!(
                "{} weights for {} rows",
                weights.len(),
                matrix.nrows()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::validation(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        if !(lower.is_finite() && lower >= 0.0) {
            return Err(Error::validation(format!(
                "lower bound must be nonnegative, got {lower}"
            )));
        }
        let shift = if lower > 0.0 {
            matrix.column_sum().into_iter().map(|s| s * lower).collect()
        } else {
            vec![0.0; matrix.nrows()]
        };
        let sqrt_w = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self {
            matrix,
            weights,
            sqrt_w,
            lower,
            shift,
            tol,
            max_iterations: 1000 + 30 * matrix.ncols(),
        })
    }

    pub fn with_max_iterations(mut self, cap: usize) -> Self {
        self.max_iterations = cap;
        self
    }

    pub fn matrix(&self) -> &M {
        self.matrix
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Projects `target`. `warm` lists columns to try as the initial support;
    /// it affects speed only.
    pub fn solve(&self, target: &[f64], warm: Option<&[usize]>) -> Result<NnlsSolution> {
        self.run(target, warm.map(Start::Support))
    }

    /// Projects `target` starting from `previous`, a solution of this solver
    /// for a nearby target. Its weights are a feasible point, so the solve
    /// keeps most of its support. Affects speed only.
    pub fn solve_from(&self, target: &[f64], previous: &NnlsSolution) -> Result<NnlsSolution> {
        if previous.nu.len() != self.matrix.ncols() {
            return Err(Error::validation("previous solution does not match the matrix"));
        }
        self.run(target, Some(Start::Point(&previous.nu)))
    }

    fn run(&self, target: &[f64], start: Option<Start<'_>>) -> Result<NnlsSolution> {
        let m = self.matrix.nrows();
        let h = self.matrix.ncols();
        if target.len() != m {
            return Err(Error::validation(format!(
                "target has {} entries for {m} rows",
                target.len()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("target must be finite"));
        }
        let y: Vec<f64> = target.iter().zip(&self.shift).map(|(t, s)| t - s).collect();
        let b: Vec<f64> = y.iter().zip(&self.sqrt_w).map(|(v, s)| v * s).collect();
        // the entering test is on the half gradient Mᵀ Ω r
        let enter_tol = 0.5 * self.tol.kkt;

        let mut qr = Qr::new(m);
        let mut x = vec![0.0; h];
        let mut in_set = vec![false; h];
        let mut blocked = vec![false; h];
        let mut iterations = 0usize;
        let mut trace = Vec::new();
        let mut scratch = vec![0.0; m];

        match start {
            Some(Start::Support(cols)) => {
                for &j in cols {
                    if j < h && !in_set[j] && qr.add(self.weighted_column(j, &mut scratch), &b, j) {
                        in_set[j] = true;
                    }
                }
                // x = 0 is feasible, so dropping nonpositive coefficients
                // until the subproblem solution is positive is a valid inner
                // loop
                loop {
                    let z = qr.solve();
                    let bad: Vec<usize> = qr
                        .cols
                        .iter()
                        .zip(&z)
                        .filter(|(_, &zi)| zi <= 0.0)
                        .map(|(&c, _)| c)
                        .collect();
                    if bad.is_empty() {
                        for (&c, &zi) in qr.cols.iter().zip(&z) {
                            x[c] = zi;
                        }
                        break;
                    }
                    for c in bad {
                        qr.remove(c);
                        in_set[c] = false;
                    }
                }
            }
            Some(Start::Point(nu)) => {
                for (j, &v) in nu.iter().enumerate() {
                    let excess = v - self.lower;
                    if excess > 0.0 && qr.add(self.weighted_column(j, &mut scratch), &b, j) {
                        in_set[j] = true;
                        x[j] = excess;
                    }
                }
                loop {
                    let z = qr.solve();
                    if z.iter().all(|&zi| zi > 0.0) {
                        for (&c, &zi) in qr.cols.iter().zip(&z) {
                            x[c] = zi;
                        }
                        break;
                    }
                    interpolate(&mut qr, &mut x, &mut in_set, &z);
                }
            }
            None => {}
        }

        let mut grad = vec![0.0; h];
        let mut best = x.clone();
        let mut best_objective = f64::INFINITY;
        loop {
            let r = self.residual(&y, &x, &qr.cols);
            let objective = weighted_norm2(&r, &self.weights);
            trace.push(objective);
            if objective <= best_objective {
                best_objective = objective;
                best.copy_from_slice(&x);
            }
            let wr: Vec<f64> = r.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
            self.matrix.tmul(&wr, &mut grad);

            let mut entering = None;
            let mut top = enter_tol;
            for j in 0..h {
                if !in_set[j] && !blocked[j] && grad[j] > top {
                    top = grad[j];
                    entering = Some(j);
                }
            }
            let Some(t) = entering else {
                break;
            };
            iterations += 1;
            if iterations > self.max_iterations {
                return Err(self.non_convergence(iterations, &y, &best));
            }
            if !qr.add(self.weighted_column(t, &mut scratch), &b, t) {
                blocked[t] = true;
                continue;
            }
            in_set[t] = true;

            loop {
                let z = qr.solve();
                let pos_t = qr.cols.iter().position(|&c| c == t);
                if let Some(pt) = pos_t {
                    if z[pt] <= 0.0 && x[t] == 0.0 {
                        // rounding made an improving column look useless
                        qr.remove(t);
                        in_set[t] = false;
                        blocked[t] = true;
                        break;
                    }
                }
                if z.iter().all(|&zi| zi > 0.0) {
                    for (&c, &zi) in qr.cols.iter().zip(&z) {
                        x[c] = zi;
                    }
                    blocked.iter_mut().for_each(|v| *v = false);
                    break;
                }
                iterations += 1;
                if iterations > self.max_iterations {
                    return Err(self.non_convergence(iterations, &y, &best));
                }
                interpolate(&mut qr, &mut x, &mut in_set, &z);
            }
        }

        Ok(self.finish(&y, x, iterations, trace, &grad))
    }

    fn weighted_column<'s>(&self, j: usize, scratch: &'s mut [f64]) -> &'s [f64] {
        self.matrix.column(j, scratch);
        for (v, s) in scratch.iter_mut().zip(&self.sqrt_w) {
            *v *= s;
        }
        scratch
    }

    fn residual(&self, y: &[f64], x: &[f64], support: &[usize]) -> Vec<f64> {
        let mut r = y.to_vec();
        for &c in support {
            if x[c] != 0.0 {
                self.matrix.axpy_column(c, -x[c], &mut r);
            }
        }
        r
    }

    fn finish(&self, y: &[f64], mu: Vec<f64>, iterations: usize, trace: Vec<f64>, grad: &[f64]) -> NnlsSolution {
        let support: Vec<usize> = (0..mu.len()).filter(|&j| mu[j] > 0.0).collect();
        let r = self.residual(y, &mu, &support);
        let objective = weighted_norm2(&r, &self.weights);
        let kkt_residual = mu
            .iter()
            .zip(grad)
            .map(|(&v, &g)| {
                // gradient of the objective is −2·g
                if v > 0.0 {
                    (2.0 * g).abs()
                } else {
                    (2.0 * g).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        let fitted: Vec<f64> = y
            .iter()
            .zip(&r)
            .zip(&self.shift)
            .map(|((yi, ri), s)| yi - ri + s)
            .collect();
        let nu = mu.into_iter().map(|v| v + self.lower).collect();
        NnlsSolution {
            nu,
            fitted,
            objective,
            support,
            iterations,
            kkt_residual,
            trace,
        }
    }

    fn non_convergence(&self, iterations: usize, y: &[f64], best: &[f64]) -> Error {
        let support: Vec<usize> = (0..best.len()).filter(|&j| best[j] > 0.0).collect();
        let r = self.residual(y, best, &support);
        let wr: Vec<f64> = r.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        let mut grad = vec![0.0; best.len()];
        self.matrix.tmul(&wr, &mut grad);
        let sol = self.finish(y, best.to_vec(), iterations, Vec::new(), &grad);
        Error::NnlsNonConvergence {
            iterations,
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
            best_nu: sol.nu,
        }
    }
}

enum Start<'a> {
    Support(&'a [usize]),
    /// Type weights including the lower bound.
    Point(&'a [f64]),
}

/// Moves `x` towards the subproblem solution `z` until a coefficient hits
/// zero, and drops the columns that did.
fn interpolate(qr: &mut Qr, x: &mut [f64], in_set: &mut [bool], z: &[f64]) {
    let mut alpha = f64::INFINITY;
    for (&c, &zi) in qr.cols.iter().zip(z) {
        if zi <= 0.0 {
            let a = x[c] / (x[c] - zi);
            alpha = alpha.min(a);
        }
    }
    let cols = qr.cols.clone();
    for (&c, &zi) in cols.iter().zip(z) {
        x[c] += alpha * (zi - x[c]);
    }
    for (&c, &zi) in cols.iter().zip(z) {
        if zi <= 0.0 && x[c] <= f64::EPSILON * 16.0 || x[c] <= 0.0 {
            x[c] = 0.0;
            qr.remove(c);
            in_set[c] = false;
        }
    }
}

fn weighted_norm2(r: &[f64], w: &[f64]) -> f64 {
    r.iter().zip(w).map(|(a, w)| a * a * w).sum()
}

/// Thin QR of the support columns: `Q` with orthonormal columns, `R` upper
/// triangular, and `Qᵀb`.
struct Qr {
    m: usize,
    cols: Vec<usize>,
    q: Vec<Vec<f64>>,
    /// `r[c]` is column `c` of R, length `c + 1`.
    r: Vec<Vec<f64>>,
    qtb: Vec<f64>,
}

impl Qr {
    fn new(m: usize) -> Self {
        Self {
            m,
            cols: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
            qtb: Vec::new(),
        }
    }

    /// Appends a column; returns false (leaving the factorization unchanged)
    /// when it is numerically in the span of the current columns.
    fn add(&mut self, a: &[f64], b: &[f64], id: usize) -> bool {
        let norm0 = super::dot(a, a).sqrt();
        if norm0 == 0.0 || self.cols.len() >= self.m {
            return false;
        }
        let mut v = a.to_vec();
        let mut rcol = vec![0.0; self.cols.len() + 1];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let h = super::dot(qi, &v);
                rcol[i] += h;
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= h * qk;
                }
            }
        }
        let norm = super::dot(&v, &v).sqrt();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        *rcol.last_mut().unwrap() = norm;
        self.qtb.push(super::dot(&v, b));
        self.q.push(v);
        self.r.push(rcol);
        self.cols.push(id);
        true
    }

    /// Deletes a column by id and restores triangularity with Givens
    /// rotations.
    fn remove(&mut self, id: usize) {
        let Some(t) = self.cols.iter().position(|&c| c == id) else {
            return;
        };
        self.cols.remove(t);
        self.r.remove(t);
        let p = self.cols.len();
        // columns t..p now have one subdiagonal entry at row c + 1
        for c in t..p {
            let (a, bb) = (self.r[c][c], self.r[c][c + 1]);
            let h = a.hypot(bb);
            let (cs, sn) = if h == 0.0 { (1.0, 0.0) } else { (a / h, bb / h) };
            for col in &mut self.r[c..] {
                let (u, w) = (col[c], col[c + 1]);
                col[c] = cs * u + sn * w;
                col[c + 1] = -sn * u + cs * w;
            }
            self.r[c].truncate(c + 1);
            let (lo, hi) = self.q.split_at_mut(c + 1);
            let (qa, qb) = (&mut lo[c], &mut hi[0]);
            for (u, w) in qa.iter_mut().zip(qb.iter_mut()) {
                let (x, y) = (*u, *w);
                *u = cs * x + sn * y;
                *w = -sn * x + cs * y;
            }
            let (x, y) = (self.qtb[c], self.qtb[c + 1]);
            self.qtb[c] = cs * x + sn * y;
            self.qtb[c + 1] = -sn * x + cs * y;
        }
        self.q.truncate(p);
        self.qtb.truncate(p);
    }

    /// Least-squares coefficients in the order of `cols`.
    fn solve(&self) -> Vec<f64> {
        let p = self.cols.len();
        let mut z = self.qtb.clone();
        for i in (0..p).rev() {
            let mut s = z[i];
            for j in i + 1..p {
                s -= self.r[j][i] * z[j];
            }
            z[i] = s / self.r[i][i];
        }
        z
    }
}
