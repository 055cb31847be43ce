//! Cone projection by column generation.
//!
//! A working set of type columns is projected onto with the NNLS solver; a
//! binary program then finds the type whose column most improves the fit
//! (the pricing problem). The loop stops when no column has positive
//! pricing value. A common lower bound `ℓ` on the weights is handled by
//! shifting the target by `ℓ` times the sum of all columns of the model,
//! which is known in closed form.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AltSet, Design, ProbVector};
use crate::optim::{binary_max, column_rank, ColumnOps, CoverConstraint, NnlsSolver, Tolerances};
use crate::rng;
use crate::type_space::{model_summary, pattern_of, Model, Tag, TypeMatrix};

/// Pricing values at or below this certify optimality.
pub const PRICING_TOLERANCE: f64 = 1e-9;
/// Relative objective improvement regarded as a stall.
pub const STALL_IMPROVEMENT: f64 = 1e-10;
/// Consecutive stalled iterations before giving up.
pub const STALL_ITERATIONS: usize = 5;

/// Rank the working columns must reach: problems plus one.
pub fn required_rank(design: &Design) -> usize {
    design.n_problems() + 1
}

fn stacked_columns(matrix: &TypeMatrix) -> Vec<Vec<f64>> {
    let mut buf = vec![0.0; matrix.nrows()];
    (0..matrix.ncols())
        .map(|j| {
            ColumnOps::column(matrix, j, &mut buf);
            buf.clone()
        })
        .collect()
}

fn random_type<R: Rng>(r: &mut R, k: usize, tags: &[Tag]) -> (AltSet, Tag) {
    let bits = if k >= 64 {
        r.random::<u64>()
    } else {
        r.random::<u64>() & ((1u64 << k) - 1)
    };
    let tag = tags[r.random_range(0..tags.len())];
    (AltSet::from_bits(bits), tag)
}

/// Initial working set: the always-passive column and `extra` random types,
/// then more random types until the rank condition holds.
pub fn seed_columns(design: &Design, model: Model, extra: usize, seed: u64) -> Result<TypeMatrix> {
    let mut m = TypeMatrix::empty(design, (0..design.n_problems()).collect(), model);
    m.push_type(AltSet::EMPTY, Tag::Rational);
    let mut r = rng::stream(seed, rng::MAIN_STREAM);
    let k = design.k();
    for _ in 0..extra {
        let (s, t) = random_type(&mut r, k, model.tags());
        m.push_type(s, t);
    }
    let required = required_rank(design);
    let mut rank = column_rank(&stacked_columns(&m), Tolerances::default().rank);
    let cap = extra + 50 * required;
    let mut attempts = 0;
    while rank < required {
        if attempts >= cap {
            return Err(Error::RankDeficient {
                achieved: rank,
                required,
                columns: m.ncols(),
            });
        }
        // add a batch before the next rank check
        for _ in 0..(required - rank) {
            let (s, t) = random_type(&mut r, k, model.tags());
            m.push_type(s, t);
            attempts += 1;
        }
        rank = column_rank(&stacked_columns(&m), Tolerances::default().rank);
    }
    Ok(m)
}

/// Best column found by pricing.
#[derive(Clone, Debug, PartialEq)]
pub struct PricedColumn {
    pub witness: AltSet,
    pub tag: Tag,
    pub pattern: Vec<u64>,
    /// `vᵀ(a − η̃)`.
    pub value: f64,
    /// Branch-and-bound nodes over all tags.
    pub nodes: usize,
}

fn column_value(sets_len: usize, pattern: &[u64], v: &[f64]) -> f64 {
    (0..sets_len)
        .map(|r| {
            let active = pattern[r / 64] >> (r % 64) & 1 == 1;
            if active {
                v[2 * r]
            } else {
                v[2 * r + 1]
            }
        })
        .sum()
}

/// Solves the pricing problem: over the columns of `model` on all design
/// problems, maximizes `vᵀ(a − η̃)` where `v = Ω(y − η̃)` is `direction`.
pub fn pricing(
    direction: &[f64],
    fitted: &[f64],
    design: &Design,
    model: Model,
    tol: &Tolerances,
) -> Result<PricedColumn> {
    let sets: Vec<AltSet> = design.problems().iter().map(|p| p.members()).collect();
    let rows = sets.len();
    if direction.len() != 2 * rows || fitted.len() != 2 * rows {
        return Err(Error::validation(format!(
            "pricing vectors must have {} entries",
            2 * rows
        )));
    }
    let grand = design.universe().full_set();
    let k = design.k();
    let offset: f64 = crate::optim::dot(direction, fitted);
    let mut best: Option<PricedColumn> = None;
    let mut nodes = 0;
    for &tag in model.tags() {
        // one binary variable per alternative, shared with its singleton
        // problem when that is observed and not forced passive
        let mut c: Vec<f64> = Vec::new();
        let mut alt_var = vec![usize::MAX; k];
        let mut row_var = vec![usize::MAX; rows];
        for (i, &a) in sets.iter().enumerate() {
            if a.len() == 1 && !tag.forces_passive(a, grand) {
                let x = a.iter().next().expect("singleton");
                alt_var[x] = c.len();
                row_var[i] = c.len();
                c.push(direction[2 * i] - direction[2 * i + 1]);
            }
        }
        for var in alt_var.iter_mut() {
            if *var == usize::MAX {
                *var = c.len();
                c.push(0.0);
            }
        }
        let mut monotone = Vec::new();
        let mut cover = Vec::new();
        for (i, &a) in sets.iter().enumerate() {
            if row_var[i] != usize::MAX || tag.forces_passive(a, grand) {
                continue;
            }
            let gain = direction[2 * i] - direction[2 * i + 1];
            let var = c.len();
            row_var[i] = var;
            c.push(gain);
            // only the constraint that can bind at an optimum is needed
            if gain > 0.0 {
                cover.push(CoverConstraint {
                    var,
                    set: a.iter().map(|x| alt_var[x]).collect(),
                });
            } else if gain < 0.0 {
                monotone.extend(a.iter().map(|x| (var, alt_var[x])));
            }
        }
        let sol = binary_max(&c, &monotone, &cover, tol)?;
        nodes += sol.nodes;
        let mut witness = AltSet::EMPTY;
        for (x, &var) in alt_var.iter().enumerate() {
            if sol.x[var] {
                witness.insert(x);
            }
        }
        let pattern = pattern_of(&sets, grand, witness, tag);
        let value = column_value(rows, &pattern, direction) - offset;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(PricedColumn {
                witness,
                tag,
                pattern,
                value,
                nodes: 0,
            });
        }
    }
    let mut best = best.expect("at least one tag");
    best.nodes = nodes;
    Ok(best)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColGenStatus {
    Optimal,
    /// Objective stalled before the pricing value reached the tolerance.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub pricing_value: f64,
    pub columns: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ColGenOptions {
    pub max_iter: usize,
    /// Random columns added to the seed set.
    pub extra: usize,
    pub seed: u64,
}

impl Default for ColGenOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            extra: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ColGenSolution {
    pub status: ColGenStatus,
    pub objective: f64,
    /// `η̂`, including the lower-bound shift.
    pub fitted: Vec<f64>,
    /// Weights above the lower bound on the working columns.
    pub excess: Vec<f64>,
    pub matrix: TypeMatrix,
    pub seed_columns: usize,
    /// Column count of the full model.
    pub total_columns: u64,
    pub lower: f64,
    pub pricing_value: f64,
    pub log: Vec<IterationRecord>,
}

impl ColGenSolution {
    pub fn generated_columns(&self) -> usize {
        self.matrix.ncols() - self.seed_columns
    }

    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,objective,pricing_value,columns")?;
        for r in &self.log {
            writeln!(w, "{},{:e},{:e},{}", r.iter, r.objective, r.pricing_value, r.columns)?;
        }
        Ok(())
    }
}

/// Projects `freqs` (design order) onto the cone of `model` with weights
/// `Ω` and lower bound `lower` on every type weight.
pub fn solve_colgen(
    freqs: &ProbVector,
    design: &Design,
    model: Model,
    weights: &[f64],
    lower: f64,
    options: &ColGenOptions,
    tol: &Tolerances,
) -> Result<ColGenSolution> {
    let rows = design.n_problems();
    if freqs.len() != rows {
        return Err(Error::validation(format!(
            "{} frequencies for {rows} problems",
            freqs.len()
        )));
    }
    if weights.len() != 2 * rows {
        return Err(Error::validation(format!(
            "{} weights for {} rows",
            weights.len(),
            2 * rows
        )));
    }
    let summary = model_summary(design, model)?;
    let shift: Vec<f64> = summary.column_sum().iter().map(|s| s * lower).collect();
    let target: Vec<f64> = freqs.stacked().iter().zip(&shift).map(|(y, s)| y - s).collect();

    let mut matrix = seed_columns(design, model, options.extra, options.seed)?;
    let seeds = matrix.ncols();
    let mut log = Vec::new();
    let mut warm: Vec<usize> = Vec::new();
    let mut stalled = 0;
    let mut previous = f64::INFINITY;
    for iter in 0..=options.max_iter {
        let sol = NnlsSolver::new(&matrix, weights.to_vec(), 0.0, *tol)?.solve(&target, Some(&warm))?;
        let direction: Vec<f64> = target
            .iter()
            .zip(&sol.fitted)
            .zip(weights)
            .map(|((y, f), w)| w * (y - f))
            .collect();
        let priced = pricing(&direction, &sol.fitted, design, model, tol)?;
        log.push(IterationRecord {
            iter,
            objective: sol.objective,
            pricing_value: priced.value,
            columns: matrix.ncols(),
        });
        let mut status = None;
        if priced.value <= PRICING_TOLERANCE {
            status = Some(ColGenStatus::Optimal);
        } else {
            if previous.is_finite() && previous - sol.objective <= STALL_IMPROVEMENT * previous.max(f64::MIN_POSITIVE) {
                stalled += 1;
            } else {
                stalled = 0;
            }
            if stalled >= STALL_ITERATIONS {
                status = Some(ColGenStatus::Inconclusive);
            } else if iter < options.max_iter && matrix.contains_pattern(&priced.pattern) {
                // the column is already present, so the projection is as good
                // as the solver tolerance allows
                status = Some(ColGenStatus::Inconclusive);
            }
        }
        if let Some(status) = status {
            return Ok(ColGenSolution {
                status,
                objective: sol.objective,
                fitted: sol.fitted.iter().zip(&shift).map(|(f, s)| f + s).collect(),
                excess: sol.nu,
                matrix,
                seed_columns: seeds,
                total_columns: summary.columns,
                lower,
                pricing_value: priced.value,
                log,
            });
        }
        if iter == options.max_iter {
            break;
        }
        previous = sol.objective;
        warm = sol.support;
        matrix.push(priced.pattern, priced.tag, priced.witness);
        warm.push(matrix.ncols() - 1);
    }
    Err(Error::ColgenLimit {
        iterations: options.max_iter,
        gap: log.last().map_or(f64::INFINITY, |r| r.pricing_value),
    })
}
