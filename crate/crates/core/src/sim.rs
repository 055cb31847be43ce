//! Synthetic panels on a design: each subject sees `q` random small problems
//! and the grand problem, and answers either as a type drawn from a mixture
//! or independently per problem with given default probabilities.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_distr::Gamma;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AggregateDataset, Design, PanelDataset, ProbVector, Record};
use crate::rng;
use crate::type_space::{Model, Tag, TypeMatrix};

/// Weights over the columns of a type matrix whose rows are all design
/// problems in design order.
#[derive(Clone, Debug)]
pub struct Mixture {
    matrix: TypeMatrix,
    weights: Vec<f64>,
}

impl Mixture {
    pub fn new(matrix: TypeMatrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != matrix.ncols() {
            return Err(Error::validation(format!(
                "{} weights for {} columns",
                weights.len(),
                matrix.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("mixture weights sum to {total}, expected 1")));
        }
        if !matrix.problems().iter().copied().eq(0..matrix.n_problems()) {
            return Err(Error::validation(
                "mixture matrix must cover every design problem in order",
            ));
        }
        Ok(Self { matrix, weights })
    }

    pub fn matrix(&self) -> &TypeMatrix {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Clone, Debug)]
pub enum Population {
    /// Mixture of rational types.
    RationalMix(Mixture),
    /// Mixture that may include overload types.
    OverloadMix(Mixture),
    /// Independent responses with these default probabilities, one per design
    /// problem.
    MarginalMatch(Vec<f64>),
}

impl Population {
    pub fn rational_mix(matrix: TypeMatrix, weights: Vec<f64>) -> Result<Self> {
        let m = Mixture::new(matrix, weights)?;
        if (0..m.matrix.ncols()).any(|j| m.weights[j] > 0.0 && m.matrix.tag(j) != Tag::Rational) {
            return Err(Error::validation("rational mixture puts mass on an overload type"));
        }
        Ok(Population::RationalMix(m))
    }

    pub fn overload_mix(matrix: TypeMatrix, weights: Vec<f64>) -> Result<Self> {
        Ok(Population::OverloadMix(Mixture::new(matrix, weights)?))
    }

    pub fn marginal_match(passive: Vec<f64>) -> Result<Self> {
        if passive.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("marginal probabilities must lie in [0, 1]"));
        }
        Ok(Population::MarginalMatch(passive))
    }

    /// Default probabilities equal to the observed default shares.
    pub fn matching(data: &AggregateDataset) -> Self {
        Population::MarginalMatch(data.counts().iter().map(|c| c.passive_frequency()).collect())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Population::RationalMix(_) => "RATIONAL_MIX",
            Population::OverloadMix(_) => "OVERLOAD_MIX",
            Population::MarginalMatch(_) => "MARGINAL_MATCH",
        }
    }

    fn n_problems(&self) -> usize {
        match self {
            Population::RationalMix(m) | Population::OverloadMix(m) => m.matrix.n_problems(),
            Population::MarginalMatch(p) => p.len(),
        }
    }

    /// Population active/passive probabilities, in design order.
    pub fn probabilities(&self) -> ProbVector {
        let passive = match self {
            Population::RationalMix(m) | Population::OverloadMix(m) => (0..m.matrix.n_problems())
                .map(|r| {
                    (0..m.matrix.ncols())
                        .filter(|&j| !m.matrix.is_active(j, r))
                        .map(|j| m.weights[j])
                        .sum::<f64>()
                        .clamp(0.0, 1.0)
                })
                .collect(),
            Population::MarginalMatch(p) => p.clone(),
        };
        ProbVector::from_passive(passive).expect("probabilities in range")
    }
}

/// Panel of `design.n()` subjects. Subject `s` draws from stream `s + 1` of
/// `seed`, so the panel does not depend on the thread count.
pub fn simulate_panel(design: &Design, population: &Population, seed: u64) -> Result<PanelDataset> {
    let n_small = design.n_problems() - 1;
    let q = design.q();
    if q > n_small {
        return Err(Error::validation(format!(
            "q = {q} exceeds the {n_small} small problems"
        )));
    }
    if population.n_problems() != design.n_problems() {
        return Err(Error::validation(format!(
            "population covers {} problems, design has {}",
            population.n_problems(),
            design.n_problems()
        )));
    }
    let n = design.n();
    if n == 0 {
        return Err(Error::validation("design has no subjects"));
    }
    let grand = design.grand_index();
    let sampler = match population {
        Population::RationalMix(m) | Population::OverloadMix(m) => {
            Some(WeightedIndex::new(&m.weights).map_err(|e| Error::validation(format!("mixture weights: {e}")))?)
        }
        Population::MarginalMatch(_) => None,
    };
    let records: Vec<Record> = (0..n)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut r = rng::stream(seed, s as u64 + 1);
            let mut shown: Vec<usize> = rand::seq::index::sample(&mut r, n_small, q).into_vec();
            shown.push(grand);
            shown.sort_unstable();
            let answers: Vec<bool> = match population {
                Population::RationalMix(m) | Population::OverloadMix(m) => {
                    let j = sampler.as_ref().expect("mixture sampler").sample(&mut r);
                    shown.iter().map(|&p| !m.matrix.is_active(j, p)).collect()
                }
                Population::MarginalMatch(p) => shown.iter().map(|&i| r.random_bool(p[i])).collect(),
            };
            shown
                .into_iter()
                .zip(answers)
                .map(move |(problem, chose_default)| Record {
                    subject: s,
                    problem,
                    chose_default,
                })
        })
        .collect();
    let width = n.to_string().len();
    let ids = (0..n).map(|s| format!("s{:0width$}", s + 1)).collect();
    PanelDataset::new(design.clone(), ids, records)
}

/// Panel whose cell counts equal `data` exactly: subjects are assigned to
/// small problems so that every cell has its observed size, and within each
/// cell the observed number of defaults is placed on a random subset of its
/// subjects, independently across cells.
pub fn matched_panel(data: &AggregateDataset, seed: u64) -> Result<PanelDataset> {
    let design = data.design();
    let (n, q) = (design.n(), design.q());
    let grand = design.grand_index();
    let counts = data.counts();
    if counts[grand].shown != n as u64 {
        return Err(Error::validation("every subject must see the grand problem"));
    }
    let small_total: u64 = counts[..grand].iter().map(|c| c.shown).sum();
    if small_total != (n * q) as u64 || counts[..grand].iter().any(|c| c.shown > n as u64) {
        return Err(Error::validation(format!(
            "small cells hold {small_total} observations; an exact panel needs n·q = {}",
            n * q
        )));
    }
    let mut r = rng::stream(seed, rng::MAIN_STREAM);
    let mut order: Vec<usize> = (0..grand).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i].shown));
    let mut capacity = vec![q; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); design.n_problems()];
    let mut subjects: Vec<usize> = (0..n).collect();
    for &i in &order {
        // fill the cell from the subjects with most room left, ties at random
        subjects.shuffle(&mut r);
        subjects.sort_by_key(|&s| std::cmp::Reverse(capacity[s]));
        let size = counts[i].shown as usize;
        if subjects.get(size.wrapping_sub(1)).is_some_and(|&s| capacity[s] == 0) {
            return Err(Error::validation(
                "cell sizes admit no assignment with q problems per subject",
            ));
        }
        for &s in &subjects[..size] {
            capacity[s] -= 1;
            members[i].push(s);
        }
    }
    members[grand] = (0..n).collect();
    let mut records = Vec::with_capacity(n * (q + 1));
    for (i, subs) in members.iter().enumerate() {
        let defaults = counts[i].default as usize;
        let mut chosen = vec![false; subs.len()];
        for k in rand::seq::index::sample(&mut r, subs.len(), defaults) {
            chosen[k] = true;
        }
        records.extend(subs.iter().zip(chosen).map(|(&subject, chose_default)| Record {
            subject,
            problem: i,
            chose_default,
        }));
    }
    let width = n.to_string().len();
    let ids = (0..n).map(|s| format!("s{:0width$}", s + 1)).collect();
    PanelDataset::new(design.clone(), ids, records)
}

/// Smallest weight a random rational population puts on any column.
pub fn interior_floor(columns: usize) -> f64 {
    1e-4f64.min(0.5 / columns as f64)
}

fn dirichlet(columns: usize, concentration: f64, seed: u64) -> Result<Vec<f64>> {
    if concentration.is_nan() || concentration <= 0.0 {
        return Err(Error::validation("concentration must be positive"));
    }
    let raw: Vec<f64> = if concentration.is_infinite() {
        vec![1.0; columns]
    } else {
        let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::validation(format!("gamma: {e}")))?;
        let mut r = rng::stream(seed, rng::MAIN_STREAM);
        (0..columns).map(|_| gamma.sample(&mut r)).collect()
    };
    let total: f64 = raw.iter().sum();
    let floor = interior_floor(columns);
    let scale = 1.0 - floor * columns as f64;
    if total > 0.0 {
        Ok(raw.iter().map(|g| floor + scale * g / total).collect())
    } else {
        Ok(vec![1.0 / columns as f64; columns])
    }
}

/// Symmetric Dirichlet weights over the columns of a model-I matrix, mixed
/// with a uniform floor so every column has positive mass.
pub fn random_rational_population(matrix: &TypeMatrix, concentration: f64, seed: u64) -> Result<Population> {
    if matrix.model() != Model::I {
        return Err(Error::validation("random rational populations need a model I matrix"));
    }
    if matrix.ncols() == 0 {
        return Err(Error::validation("matrix has no columns"));
    }
    let w = dirichlet(matrix.ncols(), concentration, seed)?;
    let total: f64 = w.iter().sum();
    Population::rational_mix(matrix.clone(), w.iter().map(|v| v / total).collect())
}

/// Moves a share of every rational type's mass onto its copy that chooses
/// the default from the grand problem.
pub fn with_grand_overload(design: &Design, base: &Mixture, share: f64) -> Result<Population> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::validation("overload share must lie in [0, 1]"));
    }
    let mut m = TypeMatrix::empty(design, (0..design.n_problems()).collect(), Model::II);
    let mut weights = Vec::new();
    for j in 0..base.matrix.ncols() {
        let col = base.matrix.column(j);
        for (tag, w) in [(Tag::Rational, 1.0 - share), (Tag::OverloadAtX, share)] {
            let witness = col.witness;
            let p = crate::type_space::pattern_of(m.problem_sets(), design.universe().full_set(), witness, tag);
            let idx = match m.index_of(&p) {
                Some(i) => i,
                None => {
                    m.push(p, tag, witness);
                    weights.push(0.0);
                    m.ncols() - 1
                }
            };
            weights[idx] += w * base.weights[j];
        }
    }
    let total: f64 = weights.iter().sum();
    Population::overload_mix(m, weights.iter().map(|v| v / total).collect())
}
