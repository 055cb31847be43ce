//! Linear programs `max cᵀx` subject to `Ex = f`, `Gx ≤ h`, `x ≥ 0`, solved
//! by a two-phase revised simplex with an explicit basis inverse.

use serde::Serialize;

use super::{dot, DenseMatrix, Tolerances};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LinProgProblem {
    /// Maximized.
    pub objective: Vec<f64>,
    pub eq: DenseMatrix,
    pub eq_rhs: Vec<f64>,
    pub le: DenseMatrix,
    pub le_rhs: Vec<f64>,
}

impl LinProgProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq: DenseMatrix::zeros(0, n),
            eq_rhs: Vec::new(),
            le: DenseMatrix::zeros(0, n),
            le_rhs: Vec::new(),
        }
    }

    pub fn with_eq(mut self, matrix: DenseMatrix, rhs: Vec<f64>) -> Self {
        self.eq = matrix;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_le(mut self, matrix: DenseMatrix, rhs: Vec<f64>) -> Self {
        self.le = matrix;
        self.le_rhs = rhs;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        use super::ColumnOps;
        let n = self.n_vars();
        if self.eq.ncols() != n || self.le.ncols() != n {
            return Err(Error::validation(
                "constraint matrices must have one column per variable",
            ));
        }
        if self.eq.nrows() != self.eq_rhs.len() || self.le.nrows() != self.le_rhs.len() {
            return Err(Error::validation(
                "right-hand sides must have one entry per constraint row",
            ));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.eq_rhs) || !finite(&self.le_rhs) {
            return Err(Error::validation("linear program data must be finite"));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual multipliers of the equality rows (free sign).
    pub duals_eq: Vec<f64>,
    /// Dual multipliers of the inequality rows (nonnegative).
    pub duals_le: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, n: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            value: if status == LpStatus::Unbounded {
                f64::INFINITY
            } else {
                f64::NAN
            },
            duals_eq: Vec::new(),
            duals_le: Vec::new(),
            iterations,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            complementarity: f64::NAN,
            duality_gap: f64::NAN,
        }
    }

    /// Largest of the four certificate residuals.
    pub fn certificate(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.complementarity)
            .max(self.duality_gap)
    }
}

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BEFORE_BLAND: usize = 50;

#[derive(Copy, Clone, PartialEq, Eq)]
enum Kind {
    Original,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Sign-normalized original columns, column-major, `m` per column.
    a: Vec<f64>,
    slack_sign: Vec<f64>,
    kinds: Vec<Kind>,
    /// Row of each unit column (slack or artificial).
    unit_row: Vec<usize>,
    b: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
}

impl Tableau {
    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kinds[j] {
            Kind::Original => out.copy_from_slice(&self.a[j * self.m..(j + 1) * self.m]),
            Kind::Slack => out[self.unit_row[j]] = self.slack_sign[self.unit_row[j]],
            Kind::Artificial => out[self.unit_row[j]] = 1.0,
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        match self.kinds[j] {
            Kind::Original => {
                let col = &self.a[j * m..(j + 1) * m];
                for (i, ai) in alpha.iter_mut().enumerate() {
                    *ai = dot(&self.binv[i * m..(i + 1) * m], col);
                }
            }
            Kind::Slack | Kind::Artificial => {
                let r = self.unit_row[j];
                let s = if self.kinds[j] == Kind::Slack {
                    self.slack_sign[r]
                } else {
                    1.0
                };
                for (i, ai) in alpha.iter_mut().enumerate() {
                    *ai = s * self.binv[i * m + r];
                }
            }
        }
        alpha
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += cb * self.binv[i * m + k];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        let m = self.m;
        match self.kinds[j] {
            Kind::Original => cost[j] - dot(y, &self.a[j * m..(j + 1) * m]),
            Kind::Slack => cost[j] - y[self.unit_row[j]] * self.slack_sign[self.unit_row[j]],
            Kind::Artificial => cost[j] - y[self.unit_row[j]],
        }
    }

    fn pivot(&mut self, r: usize, j: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let p = alpha[r];
        let theta = self.xb[r] / p;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / p).collect();
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for (v, pr) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);
        self.basis[r] = j;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                bmat[i * m + k] = col[i];
            }
        }
        self.binv = invert(bmat, m).ok_or_else(|| Error::Lp("basis matrix became singular".into()))?;
        for i in 0..m {
            self.xb[i] = dot(&self.binv[i * m..(i + 1) * m], &self.b);
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Runs simplex iterations for `cost`. Returns false when unbounded.
    fn optimize(
        &mut self,
        cost: &[f64],
        allow_artificial: bool,
        tol: &Tolerances,
        iterations: &mut usize,
        cap: usize,
    ) -> Result<bool> {
        let total = self.kinds.len();
        let mut in_basis = vec![false; total];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let mut degenerate_run = 0usize;
        loop {
            *iterations += 1;
            if *iterations > cap {
                return Err(Error::Lp(format!("simplex iteration cap {cap} reached")));
            }
            let bland = degenerate_run >= DEGENERATE_BEFORE_BLAND;
            let y = self.duals(cost);
            let mut entering = None;
            let mut best = tol.kkt;
            for j in 0..total {
                if in_basis[j] || (!allow_artificial && self.kinds[j] == Kind::Artificial) {
                    continue;
                }
                let d = self.reduced_cost(j, cost, &y);
                if d > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = entering else {
                return Ok(true);
            };
            let alpha = self.ftran(j);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let bi = self.basis[i];
                let ratio = if !allow_artificial && self.kinds[bi] == Kind::Artificial && alpha[i].abs() > PIVOT_TOL {
                    // an artificial at zero may not move in either direction
                    0.0
                } else if alpha[i] > PIVOT_TOL {
                    self.xb[i].max(0.0) / alpha[i]
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.tie_break(i, li, &alpha, bland))
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if !allow_artificial && self.kinds[self.basis[r]] == Kind::Artificial {
                // keep the artificial at exactly zero
                self.xb[r] = 0.0;
            } else if self.xb[r] < 0.0 {
                self.xb[r] = 0.0;
            }
            degenerate_run = if ratio <= 1e-12 { degenerate_run + 1 } else { 0 };
            in_basis[self.basis[r]] = false;
            in_basis[j] = true;
            self.pivot(r, j, &alpha)?;
        }
    }

    fn tie_break(&self, i: usize, current: usize, alpha: &[f64], bland: bool) -> bool {
        let (a, b) = (self.basis[i], self.basis[current]);
        // artificials leave first; then Bland's smallest index, or the
        // largest pivot for stability
        let art = |j: usize| self.kinds[j] == Kind::Artificial;
        if art(a) != art(b) {
            return art(a);
        }
        if bland {
            a < b
        } else {
            alpha[i].abs() > alpha[current].abs()
        }
    }
}

fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i * m + c].abs().total_cmp(&a[j * m + c].abs()))?;
        let p = a[piv * m + c];
        if p.abs() < 1e-13 {
            return None;
        }
        if piv != c {
            for k in 0..m {
                a.swap(piv * m + k, c * m + k);
                inv.swap(piv * m + k, c * m + k);
            }
        }
        for k in 0..m {
            a[c * m + k] /= p;
            inv[c * m + k] /= p;
        }
        for i in 0..m {
            if i != c {
                let f = a[i * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Solves the program; infeasibility and unboundedness are statuses.
pub fn lp(problem: &LinProgProblem, tol: &Tolerances) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.n_vars();
    let (me, ml) = (problem.eq_rhs.len(), problem.le_rhs.len());
    let m = me + ml;

    let mut row_sign = vec![1.0; m];
    let mut b = vec![0.0; m];
    for i in 0..me {
        row_sign[i] = if problem.eq_rhs[i] < 0.0 { -1.0 } else { 1.0 };
        b[i] = row_sign[i] * problem.eq_rhs[i];
    }
    for i in 0..ml {
        row_sign[me + i] = if problem.le_rhs[i] < 0.0 { -1.0 } else { 1.0 };
        b[me + i] = row_sign[me + i] * problem.le_rhs[i];
    }
    let mut a = vec![0.0; m * n];
    for j in 0..n {
        let col = &mut a[j * m..(j + 1) * m];
        for i in 0..me {
            col[i] = row_sign[i] * problem.eq.get(i, j);
        }
        for i in 0..ml {
            col[me + i] = row_sign[me + i] * problem.le.get(i, j);
        }
    }

    let mut kinds = vec![Kind::Original; n];
    let mut unit_row = vec![usize::MAX; n];
    let mut slack_of_row = vec![None; m];
    for i in me..m {
        slack_of_row[i] = Some(kinds.len());
        kinds.push(Kind::Slack);
        unit_row.push(i);
    }
    let slack_sign: Vec<f64> = row_sign.clone();
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        match slack_of_row[i] {
            Some(s) if slack_sign[i] > 0.0 => basis.push(s),
            _ => {
                basis.push(kinds.len());
                kinds.push(Kind::Artificial);
                unit_row.push(i);
            }
        }
    }
    let total = kinds.len();
    let mut t = Tableau {
        m,
        n,
        a,
        slack_sign,
        kinds,
        unit_row,
        b: b.clone(),
        basis,
        binv: vec![0.0; m * m],
        xb: b,
        pivots_since_refactor: 0,
    };
    for i in 0..m {
        t.binv[i * m + i] = 1.0;
    }
    let cap = 50 * (total + m) + 1000;
    let mut iterations = 0;

    let has_artificial = t.kinds.contains(&Kind::Artificial);
    if has_artificial {
        let phase1: Vec<f64> = t
            .kinds
            .iter()
            .map(|&k| if k == Kind::Artificial { -1.0 } else { 0.0 })
            .collect();
        t.optimize(&phase1, true, tol, &mut iterations, cap)?;
        t.refactor()?;
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(&j, _)| t.kinds[j] == Kind::Artificial)
            .map(|(_, &v)| v.max(0.0))
            .sum();
        let scale = 1.0 + t.b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if infeas > tol.feasibility * scale {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible, n, iterations));
        }
        for (i, &j) in t.basis.iter().enumerate() {
            if t.kinds[j] == Kind::Artificial {
                t.xb[i] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&problem.objective);
    if !t.optimize(&cost, false, tol, &mut iterations, cap)? {
        return Ok(LpSolution::non_optimal(LpStatus::Unbounded, n, iterations));
    }
    t.refactor()?;

    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[i].max(0.0);
        }
    }
    let y_std = t.duals(&cost);
    let duals_eq: Vec<f64> = (0..me).map(|i| y_std[i] * row_sign[i]).collect();
    let duals_le: Vec<f64> = (0..ml).map(|i| y_std[me + i] * row_sign[me + i]).collect();
    Ok(certify(problem, x, duals_eq, duals_le, iterations, t.n))
}

fn certify(
    problem: &LinProgProblem,
    x: Vec<f64>,
    duals_eq: Vec<f64>,
    duals_le: Vec<f64>,
    iterations: usize,
    n: usize,
) -> LpSolution {
    use super::ColumnOps;
    let ax_eq = problem.eq.mul(&x);
    let ax_le = problem.le.mul(&x);
    let mut primal = x.iter().fold(0.0f64, |s, &v| s.max(-v));
    for (v, f) in ax_eq.iter().zip(&problem.eq_rhs) {
        primal = primal.max((v - f).abs());
    }
    for (v, h) in ax_le.iter().zip(&problem.le_rhs) {
        primal = primal.max(v - h);
    }
    let mut aty = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    problem.eq.tmul(&duals_eq, &mut tmp);
    aty.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
    problem.le.tmul(&duals_le, &mut tmp);
    aty.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
    let mut dual = duals_le.iter().fold(0.0f64, |s, &v| s.max(-v));
    let mut comp = 0.0f64;
    for j in 0..n {
        let d = aty[j] - problem.objective[j];
        dual = dual.max(-d);
        comp = comp.max((x[j] * d).abs());
    }
    for ((yv, v), h) in duals_le.iter().zip(&ax_le).zip(&problem.le_rhs) {
        comp = comp.max((yv * (h - v)).abs());
    }
    let value = dot(&problem.objective, &x);
    let dual_value = dot(&duals_eq, &problem.eq_rhs) + dot(&duals_le, &problem.le_rhs);
    LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
        duals_eq,
        duals_le,
        iterations,
        primal_residual: primal.max(0.0),
        dual_residual: dual.max(0.0),
        complementarity: comp,
        duality_gap: (value - dual_value).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn single_equality() {
        let p = LinProgProblem::new(vec![1.0]).with_eq(DenseMatrix::from_rows(&[vec![1.0]]), vec![0.5]);
        let s = lp(&p, &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 0.5).abs() < 1e-12);
        assert!(s.certificate() <= 1e-9);
    }

    #[test]
    fn box_inequalities() {
        let p = LinProgProblem::new(vec![1.0, 1.0]).with_le(DenseMatrix::identity(2), vec![0.2, 0.3]);
        let s = lp(&p, &tol()).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
        assert!(s.certificate() <= 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let p = LinProgProblem::new(vec![1.0]).with_eq(DenseMatrix::from_rows(&[vec![1.0]]), vec![-1.0]);
        assert_eq!(lp(&p, &tol()).unwrap().status, LpStatus::Infeasible);
        let p = LinProgProblem::new(vec![1.0, 0.0]).with_le(DenseMatrix::from_rows(&[vec![0.0, 1.0]]), vec![1.0]);
        assert_eq!(lp(&p, &tol()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        // second row is twice the first
        let e = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]]);
        let p = LinProgProblem::new(vec![1.0, 0.0, 2.0]).with_eq(e, vec![1.0, 2.0, 1.0]);
        let s = lp(&p, &tol()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 3.0).abs() < 1e-12);
        assert!(s.certificate() <= 1e-9);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let p = LinProgProblem::new(vec![1.0, 1.0]).with_le(DenseMatrix::identity(2), vec![1.0]);
        assert!(lp(&p, &tol()).is_err());
    }

    // Oracle for two variables: enumerate intersections of constraint lines
    // (including the axes) and keep the best feasible vertex.
    fn vertex_oracle(c: [f64; 2], g: &[[f64; 2]], h: &[f64]) -> Option<f64> {
        let mut lines: Vec<([f64; 2], f64)> = g.iter().cloned().zip(h.iter().cloned()).collect();
        lines.push(([1.0, 0.0], 0.0));
        lines.push(([0.0, 1.0], 0.0));
        let feasible = |p: [f64; 2]| {
            p[0] >= -1e-9 && p[1] >= -1e-9 && g.iter().zip(h).all(|(r, &hv)| r[0] * p[0] + r[1] * p[1] <= hv + 1e-9)
        };
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a, b) = (lines[i], lines[j]);
                let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let p = [(a.1 * b.0[1] - a.0[1] * b.1) / det, (a.0[0] * b.1 - a.1 * b.0[0]) / det];
                if feasible(p) {
                    let v = c[0] * p[0] + c[1] * p[1];
                    best = Some(best.map_or(v, |bv: f64| bv.max(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn two_variable_programs_match_vertex_enumeration(
            c in proptest::array::uniform2(-3.0f64..3.0),
            rows in proptest::collection::vec((proptest::array::uniform2(0.1f64..3.0), 0.5f64..4.0), 1..5),
        ) {
            // positive coefficients keep the region bounded
            let g: Vec<[f64; 2]> = rows.iter().map(|r| r.0).collect();
            let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let dense = DenseMatrix::from_rows(&g.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
            let s = lp(&LinProgProblem::new(c.to_vec()).with_le(dense, h.clone()), &tol()).unwrap();
            let oracle = vertex_oracle(c, &g, &h).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            prop_assert!((s.value - oracle).abs() < 1e-8);
            prop_assert!(s.certificate() <= 1e-9);
        }

        #[test]
        fn random_equality_programs_are_certified(
            x0 in proptest::collection::vec(0.0f64..1.0, 6),
            e in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 1..4),
            c in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            // feasible by construction; boundedness from the extra box row
            let dense = DenseMatrix::from_rows(&e);
            let f: Vec<f64> = e.iter().map(|r| dot(r, &x0)).collect();
            let p = LinProgProblem::new(c)
                .with_eq(dense, f)
                .with_le(DenseMatrix::from_rows(&[vec![1.0; 6]]), vec![10.0]);
            let s = lp(&p, &tol()).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            prop_assert!(s.certificate() <= 1e-9, "{:?}", s);
        }
    }
}
