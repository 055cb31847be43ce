//! Binary programs `max cᵀx`, `x ∈ {0,1}ⁿ`, under monotone constraints
//! `x_i ≥ x_j` and cover constraints `x_i ≤ Σ_{j∈J} x_j`. Best-bound
//! branch-and-bound on the LP relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{lp, DenseMatrix, LinProgProblem, LpStatus, Tolerances};
use crate::error::{Error, Result};

/// `x[var] ≤ Σ x[j] for j in set`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverConstraint {
    pub var: usize,
    pub set: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub x: Vec<bool>,
    pub value: f64,
    /// Relaxations solved.
    pub nodes: usize,
}

struct Node {
    bound: f64,
    fixed: Vec<Option<bool>>,
    relaxed: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

/// `Σ coef·x ≤ 0` with coefficients ±1, used for both constraint kinds.
struct Row {
    terms: Vec<(usize, f64)>,
}

/// Maximizes `cᵀx` over binary `x`. `monotone` holds pairs `(i, j)` meaning
/// `x_i ≥ x_j`.
pub fn binary_max(
    c: &[f64],
    monotone: &[(usize, usize)],
    cover: &[CoverConstraint],
    tol: &Tolerances,
) -> Result<BinarySolution> {
    let n = c.len();
    let check = |i: usize| {
        if i < n {
            Ok(())
        } else {
            Err(Error::validation(format!("constraint refers to variable {i} of {n}")))
        }
    };
    let mut rows = Vec::with_capacity(monotone.len() + cover.len());
    for &(i, j) in monotone {
        check(i)?;
        check(j)?;
        if i != j {
            rows.push(Row {
                terms: vec![(j, 1.0), (i, -1.0)],
            });
        }
    }
    for cc in cover {
        check(cc.var)?;
        let mut terms = vec![(cc.var, 1.0)];
        for &j in &cc.set {
            check(j)?;
            if j == cc.var {
                // x ≤ x + ... always holds
                terms.clear();
                break;
            }
            terms.push((j, -1.0));
        }
        if !terms.is_empty() {
            rows.push(Row { terms });
        }
    }
    let mut occurs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &(v, _) in &row.terms {
            occurs[v].push(r);
        }
    }
    let feasible = |x: &[bool]| {
        rows.iter()
            .all(|r| r.terms.iter().map(|&(v, a)| if x[v] { a } else { 0.0 }).sum::<f64>() <= 0.5)
    };
    let value_of = |x: &[bool]| c.iter().zip(x).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>();

    let mut best_x = vec![false; n];
    let mut best_value = 0.0;
    let mut nodes = 0usize;
    let mut heap = BinaryHeap::new();
    let mut root = vec![None; n];
    if !propagate(&rows, &occurs, &mut root, None) {
        return Err(Error::Infeasible("binary program has no feasible point".into()));
    }
    match relax(c, &rows, &root, tol, &mut nodes)? {
        Some((bound, relaxed)) => {
            try_incumbent(&relaxed, tol, &feasible, &value_of, &mut best_x, &mut best_value);
            heap.push(Node {
                bound,
                fixed: root,
                relaxed,
            });
        }
        None => return Err(Error::Infeasible("binary program has no feasible point".into())),
    }

    while let Some(node) = heap.pop() {
        if node.bound <= best_value + tol.feasibility {
            break;
        }
        let branch = node
            .relaxed
            .iter()
            .enumerate()
            .filter(|&(i, &v)| node.fixed[i].is_none() && (v - v.round()).abs() > tol.integrality)
            // variables in many rows first, then the most fractional
            .max_by(|a, b| {
                occurs[a.0]
                    .len()
                    .cmp(&occurs[b.0].len())
                    .then((0.5 - (a.1 - 0.5).abs()).total_cmp(&(0.5 - (b.1 - 0.5).abs())))
            })
            .map(|(i, _)| i);
        let Some(i) = branch else {
            continue;
        };
        for value in [true, false] {
            let mut fixed = node.fixed.clone();
            fixed[i] = Some(value);
            if !propagate(&rows, &occurs, &mut fixed, Some(i)) {
                continue;
            }
            if let Some((bound, relaxed)) = relax(c, &rows, &fixed, tol, &mut nodes)? {
                try_incumbent(&relaxed, tol, &feasible, &value_of, &mut best_x, &mut best_value);
                if bound > best_value + tol.feasibility {
                    heap.push(Node { bound, fixed, relaxed });
                }
            }
        }
    }
    Ok(BinarySolution {
        x: best_x,
        value: best_value,
        nodes,
    })
}

/// Fixes variables implied by the current fixings. Returns false when some
/// row cannot be satisfied. `changed` limits the first pass to the rows of
/// one variable.
fn propagate(rows: &[Row], occurs: &[Vec<usize>], fixed: &mut [Option<bool>], changed: Option<usize>) -> bool {
    let mut queue: Vec<usize> = match changed {
        Some(v) => occurs[v].clone(),
        None => (0..rows.len()).collect(),
    };
    let mut queued = vec![false; rows.len()];
    for &r in &queue {
        queued[r] = true;
    }
    while let Some(r) = queue.pop() {
        queued[r] = false;
        let row = &rows[r];
        // smallest attainable left-hand side
        let mut min_lhs = 0.0;
        for &(v, a) in &row.terms {
            match fixed[v] {
                Some(true) => min_lhs += a,
                Some(false) => {}
                None if a < 0.0 => min_lhs += a,
                None => {}
            }
        }
        if min_lhs > 0.5 {
            return false;
        }
        for &(v, a) in &row.terms {
            if fixed[v].is_some() || min_lhs + a.abs() <= 0.5 {
                continue;
            }
            fixed[v] = Some(a < 0.0);
            for &other in &occurs[v] {
                if !queued[other] {
                    queued[other] = true;
                    queue.push(other);
                }
            }
        }
    }
    true
}

fn try_incumbent(
    relaxed: &[f64],
    tol: &Tolerances,
    feasible: &dyn Fn(&[bool]) -> bool,
    value_of: &dyn Fn(&[bool]) -> f64,
    best_x: &mut Vec<bool>,
    best_value: &mut f64,
) {
    let integral = relaxed.iter().all(|v| (v - v.round()).abs() <= tol.integrality);
    let rounded: Vec<bool> = relaxed
        .iter()
        .map(|&v| if integral { v > 0.5 } else { v >= 1.0 - tol.integrality })
        .collect();
    if feasible(&rounded) {
        let v = value_of(&rounded);
        if v > *best_value {
            *best_value = v;
            *best_x = rounded;
        }
    }
}

/// LP relaxation with some variables fixed; `None` when infeasible.
/// Returns the bound and the full relaxed point. Rows that hold on the whole
/// box are dropped, and free variables left in no row are set by the sign of
/// their coefficient.
fn relax(
    c: &[f64],
    rows: &[Row],
    fixed: &[Option<bool>],
    tol: &Tolerances,
    nodes: &mut usize,
) -> Result<Option<(f64, Vec<f64>)>> {
    *nodes += 1;
    let n = c.len();
    let mut x = vec![0.0; n];
    let mut constant = 0.0;
    for i in 0..n {
        if fixed[i] == Some(true) {
            x[i] = 1.0;
            constant += c[i];
        }
    }
    let mut kept: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut in_lp = vec![false; n];
    for r in rows {
        let mut free_terms = Vec::new();
        let mut fixed_part = 0.0;
        let mut max_lhs = 0.0;
        for &(v, a) in &r.terms {
            match fixed[v] {
                Some(true) => {
                    fixed_part += a;
                    max_lhs += a;
                }
                Some(false) => {}
                None => {
                    free_terms.push((v, a));
                    if a > 0.0 {
                        max_lhs += a;
                    }
                }
            }
        }
        if free_terms.is_empty() {
            if fixed_part > 0.5 {
                return Ok(None);
            }
            continue;
        }
        if max_lhs <= 0.0 {
            continue;
        }
        for &(v, _) in &free_terms {
            in_lp[v] = true;
        }
        kept.push((free_terms, -fixed_part));
    }
    for i in 0..n {
        if fixed[i].is_none() && !in_lp[i] && c[i] > 0.0 {
            x[i] = 1.0;
            constant += c[i];
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| in_lp[i]).collect();
    if free.is_empty() {
        return Ok(Some((constant, x)));
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let mut lhs: Vec<Vec<f64>> = Vec::with_capacity(kept.len() + free.len());
    let mut rhs = Vec::with_capacity(kept.len() + free.len());
    for (terms, b) in kept {
        let mut row = vec![0.0; free.len()];
        for (v, a) in terms {
            row[pos[v]] += a;
        }
        lhs.push(row);
        rhs.push(b);
    }
    for k in 0..free.len() {
        let mut row = vec![0.0; free.len()];
        row[k] = 1.0;
        lhs.push(row);
        rhs.push(1.0);
    }
    let obj: Vec<f64> = free.iter().map(|&i| c[i]).collect();
    let problem = LinProgProblem::new(obj).with_le(DenseMatrix::from_rows(&lhs), rhs);
    let sol = lp(&problem, tol)?;
    match sol.status {
        LpStatus::Optimal => {
            for (k, &i) in free.iter().enumerate() {
                x[i] = sol.x[k].clamp(0.0, 1.0);
            }
            Ok(Some((constant + sol.value, x)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Lp("bounded relaxation reported unbounded".into())),
    }
}
