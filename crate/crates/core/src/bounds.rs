//! Population-level and feasible bounds on the default share of a target
//! problem, the rationalizable fraction of the data, and the uniform-MSE
//! measure of how restrictive each model is.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AggregateDataset, Design, ProbVector};
use crate::optim::{lp, ColumnOps, DenseMatrix, LinProgProblem, LpStatus, NnlsSolver, Tolerances};
use crate::rng;
use crate::rum_test::weights_for;
use crate::type_space::{enumerate_columns, Model, TypeMatrix};

/// Projection residual norms above this make the restricted data
/// non-rationalizable.
pub const RATIONALIZABLE_TOLERANCE: f64 = 1e-9;

/// Slack on the equality rows when the right-hand side is itself a
/// projection.
pub const PROJECTION_SLACK: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinBound {
    pub value: f64,
    /// Design indices of every problem attaining the minimum.
    pub argmin: Vec<usize>,
}

/// Smallest passive probability over the non-grand problems.
pub fn min_bound(freqs: &ProbVector, design: &Design) -> Result<MinBound> {
    check_len(freqs, design.n_problems())?;
    let small = design.small_indices();
    if small.is_empty() {
        return Err(Error::validation("min bound needs at least one non-grand problem"));
    }
    let value = small.clone().map(|i| freqs.passive(i)).fold(f64::INFINITY, f64::min);
    let argmin = small.filter(|&i| freqs.passive(i) <= value + 1e-12).collect();
    Ok(MinBound { value, argmin })
}

fn check_len(freqs: &ProbVector, n: usize) -> Result<()> {
    if freqs.len() != n {
        return Err(Error::validation(format!(
            "{} probability pairs for {n} problems",
            freqs.len()
        )));
    }
    Ok(())
}

/// The fitted point of a weighted cone projection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    /// Stacked `(active, passive)` rows of `Mν̂`, in matrix row order.
    pub fitted: Vec<f64>,
    pub nu: Vec<f64>,
    pub objective: f64,
    pub support: Vec<usize>,
    pub kkt_residual: f64,
}

impl Projection {
    /// Total type mass `Σν̂`, the common sum of every fitted pair.
    pub fn mass(&self) -> f64 {
        self.nu.iter().sum()
    }

    /// Fitted passive probability for matrix row `r`.
    pub fn passive(&self, r: usize) -> f64 {
        self.fitted[2 * r + 1]
    }

    /// Fitted pairs divided by their common sum, so that each sums to one.
    /// The untightened projection need not put total mass exactly one on
    /// the types.
    pub fn normalized(&self) -> Result<ProbVector> {
        let pairs = self
            .fitted
            .chunks(2)
            .map(|p| {
                let s = p[0] + p[1];
                if s > 0.0 {
                    [p[0] / s, 1.0 - p[0] / s]
                } else {
                    [0.0, 1.0]
                }
            })
            .collect();
        ProbVector::new(pairs)
    }
}

/// Projects `freqs` (one pair per matrix row problem) onto the cone of the
/// matrix under diagonal weights, with every type weight at least `lower`.
pub fn constrained_estimator(
    freqs: &ProbVector,
    matrix: &TypeMatrix,
    weights: &[f64],
    lower: f64,
    tol: &Tolerances,
) -> Result<Projection> {
    if freqs.len() != matrix.n_problems() {
        return Err(Error::validation(format!(
            "{} probability pairs for a matrix over {} problems",
            freqs.len(),
            matrix.n_problems()
        )));
    }
    let solver = NnlsSolver::new(matrix, weights.to_vec(), lower, *tol)?;
    let s = solver.solve(&freqs.stacked(), None)?;
    Ok(Projection {
        fitted: s.fitted,
        nu: s.nu,
        objective: s.objective,
        support: s.support,
        kkt_residual: s.kkt_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RumBound {
    Defined {
        value: f64,
        /// Largest LP certificate residual.
        certificate: f64,
    },
    /// The data on the target's proper subsets are not rationalizable;
    /// carries the norm of the projection residual.
    NotDefined { residual: f64 },
}

impl RumBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            RumBound::Defined { value, .. } => Some(*value),
            RumBound::NotDefined { .. } => None,
        }
    }
}

/// Design indices of the matrix row problems that are proper subsets of the
/// target.
fn proper_subsets(matrix: &TypeMatrix, design: &Design, target: usize) -> Vec<usize> {
    let t = design.problems()[target].members();
    matrix
        .problems()
        .iter()
        .copied()
        .filter(|&p| design.problems()[p].members().is_proper_subset(t))
        .collect()
}

/// Largest passive probability at `target` that, together with the
/// frequencies on its proper subsets, is consistent with the model.
/// `freqs` holds one pair per matrix row problem.
pub fn rum_bound(
    freqs: &ProbVector,
    matrix: &TypeMatrix,
    design: &Design,
    target: usize,
    tol: &Tolerances,
) -> Result<RumBound> {
    if freqs.len() != matrix.n_problems() {
        return Err(Error::validation("probability vector does not match the matrix rows"));
    }
    let subsets = proper_subsets(matrix, design, target);
    let local: Vec<f64> = subsets
        .iter()
        .flat_map(|&p| {
            let r = matrix.row_of(p).expect("row listed by the matrix");
            freqs.pairs()[r]
        })
        .collect();
    if !subsets.is_empty() {
        let restricted = matrix.restrict(design, &subsets)?;
        let solver = NnlsSolver::new(&restricted, vec![1.0; local.len()], 0.0, *tol)?;
        let s = solver.solve(&local, None)?;
        let residual = s.objective.sqrt();
        if residual > RATIONALIZABLE_TOLERANCE {
            return Ok(RumBound::NotDefined { residual });
        }
    }
    match bound_lp(matrix, design, target, &subsets, &local, 0.0, tol)? {
        Some(b) => Ok(b),
        None => Ok(RumBound::NotDefined { residual: 0.0 }),
    }
}

/// Maximizes the target's passive row over `ν ≥ 0` subject to matching
/// `rhs` on the listed problems, within `slack` when positive.
fn bound_lp(
    matrix: &TypeMatrix,
    design: &Design,
    target: usize,
    subsets: &[usize],
    rhs: &[f64],
    slack: f64,
    tol: &Tolerances,
) -> Result<Option<RumBound>> {
    matrix
        .row_of(target)
        .ok_or_else(|| Error::validation("target problem is not a row of the matrix"))?;
    let mut keep = subsets.to_vec();
    keep.push(target);
    let restricted = matrix.restrict(design, &keep)?;
    let dense = DenseMatrix::from_ops(&restricted);
    let t = 2 * subsets.len();
    let objective: Vec<f64> = (0..restricted.ncols()).map(|j| dense.get(t + 1, j)).collect();
    let constraint_rows: Vec<usize> = (0..t).collect();
    let mut problem = LinProgProblem::new(objective);
    if subsets.is_empty() {
        problem = problem.with_eq(DenseMatrix::from_rows(&[vec![1.0; restricted.ncols()]]), vec![1.0]);
    } else if slack > 0.0 {
        let e = dense.select_rows(&constraint_rows);
        let mut rows = Vec::with_capacity(2 * t);
        let mut h = Vec::with_capacity(2 * t);
        for (i, &v) in rhs.iter().enumerate() {
            rows.push((0..e.ncols()).map(|j| e.get(i, j)).collect::<Vec<_>>());
            h.push(v + slack);
            rows.push((0..e.ncols()).map(|j| -e.get(i, j)).collect::<Vec<_>>());
            h.push(-(v - slack));
        }
        problem = problem.with_le(DenseMatrix::from_rows(&rows), h);
    } else {
        problem = problem.with_eq(dense.select_rows(&constraint_rows), rhs.to_vec());
    }
    let sol = lp(&problem, tol)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(RumBound::Defined {
            value: sol.value.clamp(0.0, 1.0),
            certificate: sol.certificate(),
        })),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Lp("bound program reported unbounded".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibleBound {
    pub value: f64,
    /// Min bound implied by the projected frequencies.
    pub min_bound_of_eta: f64,
    /// Projection of the frequencies on the target's proper subsets.
    pub projection: Projection,
    /// Design indices of the projected problems, in projection row order.
    pub problems: Vec<usize>,
}

/// Feasible analogue of [`rum_bound`]: projects the frequencies on the
/// target's proper subsets onto the cone first, then bounds the target
/// against the projection.
pub fn feasible_rum_bound(
    freqs: &ProbVector,
    matrix: &TypeMatrix,
    design: &Design,
    weights: &[f64],
    target: usize,
    tol: &Tolerances,
) -> Result<FeasibleBound> {
    if freqs.len() != matrix.n_problems() || weights.len() != matrix.nrows() {
        return Err(Error::validation(
            "probability vector or weights do not match the matrix rows",
        ));
    }
    let subsets = proper_subsets(matrix, design, target);
    if subsets.is_empty() {
        return Err(Error::validation("target has no observed proper subsets"));
    }
    let rows: Vec<usize> = subsets
        .iter()
        .map(|&p| matrix.row_of(p).expect("row listed by the matrix"))
        .collect();
    let local = ProbVector::new(rows.iter().map(|&r| freqs.pairs()[r]).collect())?;
    let local_w: Vec<f64> = rows
        .iter()
        .flat_map(|&r| [weights[2 * r], weights[2 * r + 1]])
        .collect();
    let restricted = matrix.restrict(design, &subsets)?;
    let projection = constrained_estimator(&local, &restricted, &local_w, 0.0, tol)?;
    let bound = bound_lp(
        matrix,
        design,
        target,
        &subsets,
        &projection.fitted,
        PROJECTION_SLACK,
        tol,
    )?
    .and_then(|b| b.value())
    .ok_or_else(|| Error::Lp("projected frequencies were not matched by the bound program".into()))?;
    let min_bound_of_eta = (0..subsets.len())
        .map(|r| projection.passive(r))
        .fold(f64::INFINITY, f64::min);
    Ok(FeasibleBound {
        value: bound,
        min_bound_of_eta,
        projection,
        problems: subsets,
    })
}

/// Largest total type mass `1′ν` with `Mν ≤ π̂` row-wise: the share of the
/// population the model can explain.
pub fn rational_fraction(freqs: &ProbVector, matrix: &TypeMatrix, tol: &Tolerances) -> Result<f64> {
    if freqs.len() != matrix.n_problems() {
        return Err(Error::validation("probability vector does not match the matrix rows"));
    }
    let dense = DenseMatrix::from_ops(matrix);
    let problem = LinProgProblem::new(vec![1.0; matrix.ncols()]).with_le(dense, freqs.stacked());
    let sol = lp(&problem, tol)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.clamp(0.0, 1.0)),
        other => Err(Error::Lp(format!("rational-fraction program ended {other:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformMse {
    /// Average over draws of the root mean squared passive deviation.
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
    pub seed: u64,
}

/// Draws one passive probability per problem uniformly on [0, 1], projects
/// the draw onto the cone, and records the root mean squared deviation of
/// the fitted passive probabilities. Draw `d` uses replication stream `d`,
/// so different matrices over the same problems see the same draws.
pub fn uniform_mse(
    matrix: &TypeMatrix,
    weights: &[f64],
    draws: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<UniformMse> {
    let values = uniform_mse_draws(matrix, weights, draws, seed, tol)?;
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = if draws > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
    } else {
        0.0
    };
    Ok(UniformMse {
        mean,
        std_error: (var / draws as f64).sqrt(),
        draws,
        seed,
    })
}

/// Per-draw values behind [`uniform_mse`].
pub fn uniform_mse_draws(
    matrix: &TypeMatrix,
    weights: &[f64],
    draws: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::validation("uniform_mse needs at least one draw"));
    }
    let solver = NnlsSolver::new(matrix, weights.to_vec(), 0.0, *tol)?;
    let n = matrix.n_problems();
    let warm = solver.solve(&uniform_target(n, seed, 0).1, None)?.support;
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let (u, y) = uniform_target(n, seed, d);
            let s = solver.solve(&y, Some(&warm))?;
            let mse = (0..n).map(|i| (u[i] - s.fitted[2 * i + 1]).powi(2)).sum::<f64>() / n as f64;
            Ok(mse.sqrt())
        })
        .collect()
}

fn uniform_target(n: usize, seed: u64, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::replication(seed, d);
    let u: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let y = u.iter().flat_map(|&p| [1.0 - p, p]).collect();
    (u, y)
}

/// Per-item liking probability `p` for which a set of `size` independently
/// liked items is chosen from with probability `active_share`.
pub fn independent_liking_probability(active_share: f64, size: u32) -> f64 {
    1.0 - (1.0 - active_share).powf(1.0 / size as f64)
}

/// Active share for a set of `size` items, each liked independently with
/// probability `p`.
pub fn independent_active_share(p: f64, size: u32) -> f64 {
    1.0 - (1.0 - p).powi(size as i32)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub model: Model,
    pub target: String,
    pub p_target: f64,
    pub p_min: f64,
    pub p_min_argmin: Vec<String>,
    pub p_rum: RumBound,
    pub p_rum_feasible: f64,
    pub min_bound_of_eta: f64,
    /// Projected passive probabilities on the target's proper subsets.
    pub eta_hat: BTreeMap<String, f64>,
    pub eta_mass: f64,
    pub rational_fraction: BTreeMap<String, f64>,
    pub grand_weight: f64,
}

/// All bounds for the grand problem of an aggregate dataset.
pub fn bounds_report(data: &AggregateDataset, model: Model, tol: &Tolerances) -> Result<BoundsReport> {
    let design = data.design();
    let freqs = data.frequencies();
    let target = design.grand_index();
    let min = min_bound(&freqs, design)?;
    let matrices: Vec<(Model, TypeMatrix)> = Model::ALL
        .iter()
        .map(|&m| enumerate_columns(design, m).map(|x| (m, x)))
        .collect::<Result<_>>()?;
    let matrix = &matrices.iter().find(|(m, _)| *m == model).expect("all models built").1;
    let weights = weights_for(matrix, design)?;
    let p_rum = rum_bound(&freqs, matrix, design, target, tol)?;
    let feasible = feasible_rum_bound(&freqs, matrix, design, &weights, target, tol)?;
    let mut rational = BTreeMap::new();
    for (m, x) in &matrices {
        rational.insert(m.label().to_string(), rational_fraction(&freqs, x, tol)?);
    }
    let eta_hat = feasible
        .problems
        .iter()
        .enumerate()
        .map(|(r, &p)| (design.problem_key(p), feasible.projection.passive(r)))
        .collect();
    Ok(BoundsReport {
        model,
        target: design.problem_key(target),
        p_target: freqs.passive(target),
        p_min: min.value,
        p_min_argmin: min.argmin.iter().map(|&i| design.problem_key(i)).collect(),
        p_rum,
        p_rum_feasible: feasible.value,
        min_bound_of_eta: feasible.min_bound_of_eta,
        eta_mass: feasible.projection.mass(),
        eta_hat,
        rational_fraction: rational,
        grand_weight: weights[2 * matrix.grand_row().expect("grand row present")],
    })
}
