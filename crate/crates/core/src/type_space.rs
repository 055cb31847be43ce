//! Deterministic choice types as active/passive patterns.
//!
//! Only default-versus-active choice is observed, so a rational type is
//! summarized by the set `S` of alternatives it prefers to the default: it
//! chooses actively from `A` exactly when `S ∩ A ≠ ∅`. Models II and III add
//! copies of those patterns that switch to the default at the grand problem,
//! or at the grand problem and every problem with two or more non-default
//! alternatives.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AltSet, Design};
use crate::optim::ColumnOps;

/// Full enumeration visits all `2^k` witness sets; past this many
/// alternatives callers should use column generation.
pub const ENUMERATION_LIMIT: usize = 24;

/// Nested behavioural models, in increasing generality.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Model {
    /// Random utility.
    I,
    /// Random utility plus types that choose the default from the grand set.
    II,
    /// Model II plus types that choose the default from every set with at
    /// least two non-default alternatives (and from the grand set).
    III,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::I, Model::II, Model::III];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Model::I),
            "ii" | "2" => Ok(Model::II),
            "iii" | "3" => Ok(Model::III),
            other => Err(Error::validation(format!(
                "unknown model {other:?}, expected i, ii or iii"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::I => "i",
            Model::II => "ii",
            Model::III => "iii",
        }
    }

    /// Tags whose columns belong to this model.
    pub fn tags(self) -> &'static [Tag] {
        match self {
            Model::I => &[Tag::Rational],
            Model::II => &[Tag::Rational, Tag::OverloadAtX],
            Model::III => &[Tag::Rational, Tag::OverloadAtX, Tag::OverloadAtTriples],
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Tag {
    Rational,
    OverloadAtX,
    OverloadAtTriples,
}

impl Tag {
    /// Whether a type with this tag is forced passive on a problem.
    pub fn forces_passive(self, set: AltSet, grand: AltSet) -> bool {
        match self {
            Tag::Rational => false,
            Tag::OverloadAtX => set == grand,
            Tag::OverloadAtTriples => set == grand || set.len() >= 2,
        }
    }
}

/// One column: the active bit per row problem, the tag, and the witness set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeColumn {
    pub pattern: Vec<u64>,
    pub tag: Tag,
    pub witness: AltSet,
}

impl TypeColumn {
    pub fn is_active(&self, row: usize) -> bool {
        self.pattern[row / 64] >> (row % 64) & 1 == 1
    }
}

/// Active bits of the type `(witness, tag)` on the given problems.
pub fn pattern_of(sets: &[AltSet], grand: AltSet, witness: AltSet, tag: Tag) -> Vec<u64> {
    let mut bits = vec![0u64; words_for(sets.len())];
    for (i, &a) in sets.iter().enumerate() {
        if witness.intersects(a) && !tag.forces_passive(a, grand) {
            bits[i / 64] |= 1u64 << (i % 64);
        }
    }
    bits
}

fn words_for(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

/// Deduplicated type columns over a list of design problems. Rows are two per
/// problem, `(active, passive)`, in the order of `problems`.
#[derive(Clone, Debug)]
pub struct TypeMatrix {
    model: Model,
    problems: Vec<usize>,
    sets: Vec<AltSet>,
    grand: AltSet,
    words: usize,
    bits: Vec<u64>,
    /// The same patterns, one byte per eight problems, for `tmul`.
    bytes: Vec<u8>,
    meta: Vec<(Tag, AltSet)>,
    index: HashMap<Vec<u64>, usize>,
}

impl TypeMatrix {
    /// A matrix with no columns over the given design problems.
    pub fn empty(design: &Design, problems: Vec<usize>, model: Model) -> Self {
        let sets: Vec<AltSet> = problems.iter().map(|&i| design.problems()[i].members()).collect();
        Self {
            model,
            words: words_for(sets.len()),
            sets,
            problems,
            grand: design.universe().full_set(),
            bits: Vec::new(),
            bytes: Vec::new(),
            meta: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Appends a column unless its pattern is already present. Returns the
    /// index of the new column.
    pub fn push(&mut self, pattern: Vec<u64>, tag: Tag, witness: AltSet) -> Option<usize> {
        debug_assert_eq!(pattern.len(), self.words);
        if self.index.contains_key(&pattern) {
            return None;
        }
        let j = self.meta.len();
        self.bits.extend_from_slice(&pattern);
        let chunks = self.sets.len().div_ceil(8);
        self.bytes
            .extend(pattern.iter().flat_map(|w| w.to_le_bytes()).take(chunks));
        self.index.insert(pattern, j);
        self.meta.push((tag, witness));
        Some(j)
    }

    /// Appends the column generated by `(witness, tag)`.
    pub fn push_type(&mut self, witness: AltSet, tag: Tag) -> Option<usize> {
        let p = pattern_of(&self.sets, self.grand, witness, tag);
        self.push(p, tag, witness)
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn ncols(&self) -> usize {
        self.meta.len()
    }

    pub fn n_problems(&self) -> usize {
        self.problems.len()
    }

    /// Design indices of the row problems.
    pub fn problems(&self) -> &[usize] {
        &self.problems
    }

    pub fn problem_sets(&self) -> &[AltSet] {
        &self.sets
    }

    /// Position of a design problem among the rows.
    pub fn row_of(&self, design_problem: usize) -> Option<usize> {
        self.problems.iter().position(|&p| p == design_problem)
    }

    pub fn grand_row(&self) -> Option<usize> {
        self.sets.iter().position(|&s| s == self.grand)
    }

    pub fn pattern(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words..(j + 1) * self.words]
    }

    pub fn contains_pattern(&self, pattern: &[u64]) -> bool {
        self.index.contains_key(pattern)
    }

    pub fn index_of(&self, pattern: &[u64]) -> Option<usize> {
        self.index.get(pattern).copied()
    }

    pub fn is_active(&self, j: usize, row: usize) -> bool {
        self.bits[j * self.words + row / 64] >> (row % 64) & 1 == 1
    }

    pub fn tag(&self, j: usize) -> Tag {
        self.meta[j].0
    }

    pub fn column(&self, j: usize) -> TypeColumn {
        TypeColumn {
            pattern: self.pattern(j).to_vec(),
            tag: self.meta[j].0,
            witness: self.meta[j].1,
        }
    }

    /// Index of the column that is passive everywhere.
    pub fn all_passive_index(&self) -> Option<usize> {
        self.index.get(&vec![0u64; self.words]).copied()
    }

    /// Rows restricted to the listed design problems (which must be rows of
    /// this matrix); columns that become identical are merged, keeping the
    /// first occurrence.
    pub fn restrict(&self, design: &Design, keep: &[usize]) -> Result<TypeMatrix> {
        let rows: Vec<usize> = keep
            .iter()
            .map(|&p| {
                self.row_of(p)
                    .ok_or_else(|| Error::validation(format!("problem {p} is not a row of the matrix")))
            })
            .collect::<Result<_>>()?;
        let mut out = TypeMatrix::empty(design, keep.to_vec(), self.model);
        for j in 0..self.ncols() {
            let mut p = vec![0u64; out.words];
            for (new_row, &old_row) in rows.iter().enumerate() {
                if self.is_active(j, old_row) {
                    p[new_row / 64] |= 1u64 << (new_row % 64);
                }
            }
            out.push(p, self.meta[j].0, self.meta[j].1);
        }
        Ok(out)
    }

    /// Sparse `row,col,value` dump of the nonzero entries.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,value")?;
        for j in 0..self.ncols() {
            for r in 0..self.n_problems() {
                let row = 2 * r + usize::from(!self.is_active(j, r));
                writeln!(w, "{row},{j},1")?;
            }
        }
        Ok(())
    }
}

impl ColumnOps for TypeMatrix {
    fn nrows(&self) -> usize {
        2 * self.sets.len()
    }

    fn ncols(&self) -> usize {
        self.meta.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        for r in 0..self.sets.len() {
            let a = self.is_active(j, r);
            out[2 * r] = if a { 1.0 } else { 0.0 };
            out[2 * r + 1] = if a { 0.0 } else { 1.0 };
        }
    }

    // Every column has exactly one 1 per row pair, so column·v is the sum of
    // the passive entries plus (active − passive) over the active problems.
    // The latter is read from per-byte lookup tables.
    fn tmul(&self, v: &[f64], out: &mut [f64]) {
        let n = self.sets.len();
        let base: f64 = (0..n).map(|r| v[2 * r + 1]).sum();
        let chunks = n.div_ceil(8);
        let mut table = vec![0.0f64; chunks * 256];
        for c in 0..chunks {
            let t = &mut table[c * 256..(c + 1) * 256];
            for m in 1usize..256 {
                let low = m.trailing_zeros() as usize;
                let r = c * 8 + low;
                let delta = if r < n { v[2 * r] - v[2 * r + 1] } else { 0.0 };
                t[m] = t[m & (m - 1)] + delta;
            }
        }
        if chunks == 0 {
            out.fill(base);
            return;
        }
        for (o, bytes) in out.iter_mut().zip(self.bytes.chunks_exact(chunks)) {
            let (mut even, mut odd) = (0.0, 0.0);
            let mut pairs = bytes.chunks_exact(2);
            for (c, pair) in pairs.by_ref().enumerate() {
                even += table[2 * c * 256 + pair[0] as usize];
                odd += table[(2 * c + 1) * 256 + pair[1] as usize];
            }
            if let [last] = pairs.remainder() {
                even += table[(chunks - 1) * 256 + *last as usize];
            }
            *o = base + even + odd;
        }
    }

    fn axpy_column(&self, j: usize, alpha: f64, out: &mut [f64]) {
        for r in 0..self.sets.len() {
            let idx = 2 * r + usize::from(!self.is_active(j, r));
            out[idx] += alpha;
        }
    }
}

/// All columns of a model over every design problem, rational columns first
/// in binary order of the witness set, then overload columns.
pub fn enumerate_columns(design: &Design, model: Model) -> Result<TypeMatrix> {
    let all: Vec<usize> = (0..design.n_problems()).collect();
    enumerate_columns_on(design, all, model)
}

/// As [`enumerate_columns`], restricted to the listed design problems.
pub fn enumerate_columns_on(design: &Design, problems: Vec<usize>, model: Model) -> Result<TypeMatrix> {
    let k = design.k();
    if k > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut m = TypeMatrix::empty(design, problems, model);
    for &tag in model.tags() {
        for s in 0..(1u64 << k) {
            m.push_type(AltSet::from_bits(s), tag);
        }
    }
    Ok(m)
}

/// 0/1 indicator over columns of those that are not rational. The flag is set
/// when the matrix was built for model I, where the indicator is zero.
pub fn overload_indicator(matrix: &TypeMatrix) -> (Vec<u8>, bool) {
    let e = (0..matrix.ncols())
        .map(|j| u8::from(matrix.tag(j) != Tag::Rational))
        .collect();
    (e, matrix.model() == Model::I)
}

/// Column count `H` of a model over all design problems, and per problem the
/// number of columns active on it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub columns: u64,
    pub active_counts: Vec<u64>,
}

impl ModelSummary {
    /// Stacked `(active, passive)` sums of all columns.
    pub fn column_sum(&self) -> Vec<f64> {
        self.active_counts
            .iter()
            .flat_map(|&a| [a as f64, (self.columns - a) as f64])
            .collect()
    }
}

/// [`ModelSummary`] without building the matrix. Closed form when every
/// alternative is observed as a singleton (all witness patterns are then
/// distinct); otherwise by enumeration.
pub fn model_summary(design: &Design, model: Model) -> Result<ModelSummary> {
    let k = design.k();
    if !design.has_all_singletons() || k >= 63 {
        let m = enumerate_columns(design, model)?;
        let sums = m.column_sum();
        return Ok(ModelSummary {
            columns: m.ncols() as u64,
            active_counts: (0..m.n_problems()).map(|r| sums[2 * r] as u64).collect(),
        });
    }
    let grand = design.universe().full_set();
    let pow = |e: usize| 1u64 << e;
    let sets: Vec<AltSet> = design.problems().iter().map(|p| p.members()).collect();
    let mut columns = pow(k);
    let mut active: Vec<u64> = sets.iter().map(|a| pow(k) - pow(k - a.len())).collect();
    if model >= Model::II {
        columns += pow(k) - 1;
        for (i, a) in sets.iter().enumerate() {
            if *a != grand {
                active[i] += pow(k) - pow(k - a.len());
            }
        }
    }
    if model >= Model::III {
        // alternatives that appear in no multi-alternative small problem
        let mut covered = AltSet::EMPTY;
        for a in &sets {
            if *a != grand && a.len() >= 2 {
                covered = covered.union(*a);
            }
        }
        let uncovered: Vec<usize> = (0..k).filter(|&x| !covered.contains(x)).collect();
        let u = uncovered.len();
        columns += pow(k) - pow(u);
        for (i, a) in sets.iter().enumerate() {
            if a.len() == 1 && *a != grand {
                let x = a.iter().next().unwrap();
                active[i] += if covered.contains(x) {
                    pow(k - 1)
                } else {
                    pow(k - 1) - pow(u - 1)
                };
            }
        }
    }
    Ok(ModelSummary {
        columns,
        active_counts: active,
    })
}

/// The un-merged matrix whose rows are (problem, chosen item) and whose
/// columns are the distinct choice patterns of strict rankings, together with
/// the matrix that merges non-default rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitA {
    /// `(design problem, Some(alternative) | None for the default)`.
    pub rows: Vec<(usize, Option<usize>)>,
    /// `rows × columns`, 0/1.
    pub a: Vec<Vec<u8>>,
    /// `2·problems × rows`, 0/1.
    pub b: Vec<Vec<u8>>,
}

impl ExplicitA {
    pub fn ncols(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    /// The product `B·A`.
    pub fn merged(&self) -> Vec<Vec<u8>> {
        self.b
            .iter()
            .map(|brow| {
                (0..self.ncols())
                    .map(|j| brow.iter().zip(&self.a).map(|(&b, arow)| b * arow[j]).sum::<u8>())
                    .collect()
            })
            .collect()
    }
}

/// Builds the explicit choice matrix by enumerating all strict rankings of
/// the alternatives and the default. For didactic designs only.
pub fn build_explicit_a(design: &Design) -> Result<ExplicitA> {
    const LIMIT: usize = 5;
    let k = design.k();
    if k > LIMIT {
        return Err(Error::TooLarge { k, limit: LIMIT });
    }
    let mut rows = Vec::new();
    for (pi, p) in design.problems().iter().enumerate() {
        for x in p.members().iter() {
            rows.push((pi, Some(x)));
        }
        rows.push((pi, None));
    }
    // items 0..k are alternatives, k is the default
    let mut order: Vec<usize> = (0..=k).collect();
    let mut patterns: Vec<Vec<u8>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    loop {
        let rank = |item: usize| order.iter().position(|&o| o == item).unwrap();
        let mut col = vec![0u8; rows.len()];
        for (pi, p) in design.problems().iter().enumerate() {
            let best = p
                .members()
                .iter()
                .chain(std::iter::once(k))
                .min_by_key(|&it| rank(it))
                .unwrap();
            let chosen = if best == k { None } else { Some(best) };
            let r = rows.iter().position(|&r| r == (pi, chosen)).unwrap();
            col[r] = 1;
        }
        if seen.insert(col.clone()) {
            patterns.push(col);
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    let a = (0..rows.len())
        .map(|r| patterns.iter().map(|c| c[r]).collect())
        .collect();
    let b = (0..design.n_problems())
        .flat_map(|pi| {
            let active: Vec<u8> = rows.iter().map(|&(p, x)| u8::from(p == pi && x.is_some())).collect();
            let passive: Vec<u8> = rows.iter().map(|&(p, x)| u8::from(p == pi && x.is_none())).collect();
            [active, passive]
        })
        .collect();
    Ok(ExplicitA { rows, a, b })
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChoiceProblem, Universe};
    use crate::optim::DenseMatrix;
    use std::collections::HashSet;

    pub(crate) fn nested_three() -> Design {
        let u = Universe::numbered(3).unwrap();
        let problems = ["1", "1-2", "1-2-3"]
            .iter()
            .map(|k| ChoiceProblem::parse(k, &u).unwrap())
            .collect();
        Design::new(u, problems, 2, 1).unwrap()
    }

    fn column_multiset(m: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let cols = m.first().map_or(0, Vec::len);
        let mut v: Vec<Vec<u8>> = (0..cols).map(|j| m.iter().map(|r| r[j]).collect()).collect();
        v.sort();
        v
    }

    #[test]
    fn explicit_a_matches_displayed_nested_example() {
        let displayed: Vec<Vec<u8>> = vec![
            vec![1, 1, 1, 1, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![1, 1, 0, 0, 0, 0, 0, 0],
            vec![0, 0, 1, 1, 0, 0, 1, 1],
            vec![0, 0, 0, 0, 1, 1, 0, 0],
            vec![1, 0, 0, 0, 0, 0, 0, 0],
            vec![0, 0, 1, 0, 0, 0, 1, 0],
            vec![0, 1, 0, 1, 0, 1, 0, 1],
            vec![0, 0, 0, 0, 1, 0, 0, 0],
        ];
        let displayed_b: Vec<Vec<u8>> = vec![
            vec![1, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![0, 1, 0, 0, 0, 0, 0, 0, 0],
            vec![0, 0, 1, 1, 0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 1, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0, 1, 1, 1, 0],
            vec![0, 0, 0, 0, 0, 0, 0, 0, 1],
        ];
        let ex = build_explicit_a(&nested_three()).unwrap();
        assert_eq!(ex.a.len(), 9);
        assert_eq!(ex.ncols(), 8);
        assert_eq!(column_multiset(&ex.a), column_multiset(&displayed));
        assert_eq!(ex.b, displayed_b);
        let product: Vec<Vec<u8>> = displayed_b
            .iter()
            .map(|b| {
                (0..8)
                    .map(|j| b.iter().zip(&displayed).map(|(x, r)| x * r[j]).sum())
                    .collect()
            })
            .collect();
        assert_eq!(column_multiset(&ex.merged()), column_multiset(&product));
    }

    #[test]
    fn explicit_a_single_problem() {
        let u = Universe::numbered(1).unwrap();
        let d = Design::new(u.clone(), vec![ChoiceProblem::grand(&u)], 0, 1).unwrap();
        let ex = build_explicit_a(&d).unwrap();
        assert_eq!(column_multiset(&ex.a), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn explicit_a_size_guard() {
        let d = Design::singletons_and_pairs(6, 1, 1).unwrap();
        assert!(matches!(build_explicit_a(&d), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn single_alternative_has_two_columns() {
        let u = Universe::numbered(1).unwrap();
        let d = Design::new(u.clone(), vec![ChoiceProblem::grand(&u)], 0, 1).unwrap();
        let m = enumerate_columns(&d, Model::I).unwrap();
        assert_eq!(m.ncols(), 2);
        assert!(m.all_passive_index().is_some());
    }

    #[test]
    fn example_design_has_one_column_per_witness() {
        let d = Design::singletons_and_pairs(3, 2, 1).unwrap();
        let m = enumerate_columns(&d, Model::I).unwrap();
        // brute force: patterns of all 8 witness sets are distinct
        let sets: Vec<AltSet> = d.problems().iter().map(|p| p.members()).collect();
        let distinct: HashSet<Vec<bool>> = (0..8u64)
            .map(|s| sets.iter().map(|a| AltSet::from_bits(s).intersects(*a)).collect())
            .collect();
        assert_eq!(distinct.len(), 8);
        assert_eq!(m.ncols(), 8);
        let (e, flagged) = overload_indicator(&m);
        assert!(flagged);
        assert!(e.iter().all(|&x| x == 0));
        let m2 = enumerate_columns(&d, Model::II).unwrap();
        let (e2, flagged2) = overload_indicator(&m2);
        assert!(!flagged2);
        assert_eq!(e2.iter().filter(|&&x| x == 1).count(), 7);
    }

    #[test]
    fn enumeration_matches_merged_explicit_a() {
        for d in [
            nested_three(),
            Design::singletons_and_pairs(3, 2, 1).unwrap(),
            Design::singletons_and_pairs(2, 1, 1).unwrap(),
        ] {
            let ex = build_explicit_a(&d).unwrap();
            let merged = column_multiset(&ex.merged());
            let m = enumerate_columns(&d, Model::I).unwrap();
            let dense = DenseMatrix::from_ops(&m);
            let mut ours: Vec<Vec<u8>> = (0..m.ncols())
                .map(|j| dense.col(j).iter().map(|&x| x as u8).collect())
                .collect();
            ours.sort();
            let mut theirs = merged;
            theirs.dedup();
            assert_eq!(ours, theirs);
        }
    }

    #[test]
    fn type_matrix_invariants_hold() {
        let d = Design::singletons_and_pairs(4, 2, 1).unwrap();
        let grand = d.universe().full_set();
        let i = enumerate_columns(&d, Model::I).unwrap();
        let ii = enumerate_columns(&d, Model::II).unwrap();
        let iii = enumerate_columns(&d, Model::III).unwrap();
        for j in 0..iii.ncols() {
            let col = iii.column(j);
            let sets = iii.problem_sets();
            for (r, &a) in sets.iter().enumerate() {
                let forced = col.tag.forces_passive(a, grand);
                if col.is_active(r) {
                    assert!(col.witness.intersects(a));
                    for (r2, &b) in sets.iter().enumerate() {
                        if a.is_subset(b) && !col.tag.forces_passive(b, grand) {
                            assert!(col.is_active(r2));
                        }
                    }
                } else if !forced {
                    assert!(!col.witness.intersects(a));
                }
            }
        }
        let pats = |m: &TypeMatrix| (0..m.ncols()).map(|j| m.pattern(j).to_vec()).collect::<HashSet<_>>();
        assert!(pats(&i).is_subset(&pats(&ii)));
        assert!(pats(&ii).is_subset(&pats(&iii)));
        assert!(i.all_passive_index().is_some());
        let again = enumerate_columns(&d, Model::III).unwrap();
        assert_eq!(pats(&again), pats(&iii));
        assert_eq!(
            (0..again.ncols()).map(|j| again.column(j)).collect::<Vec<_>>(),
            (0..iii.ncols()).map(|j| iii.column(j)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tmul_matches_dense() {
        let designs = [
            Design::singletons_and_pairs(3, 2, 1).unwrap(),
            Design::singletons_and_pairs(5, 2, 1).unwrap(),
            Design::singletons_and_pairs(6, 2, 1).unwrap(),
            crate::paper_data::design(),
        ];
        for d in &designs {
            let m = enumerate_columns(d, Model::III).unwrap();
            let dense = DenseMatrix::from_ops(&m);
            let v: Vec<f64> = (0..m.nrows()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let mut a = vec![0.0; m.ncols()];
            let mut b = vec![0.0; m.ncols()];
            m.tmul(&v, &mut a);
            dense.tmul(&v, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
            assert_eq!(m.column_sum(), dense.column_sum());
        }
    }

    #[test]
    fn summary_matches_enumeration() {
        let u = Universe::numbered(4).unwrap();
        // alternative 4 never appears in a pair
        let problems = ["1", "2", "3", "4", "1-2", "2-3", "ALL"]
            .iter()
            .map(|k| ChoiceProblem::parse(k, &u).unwrap())
            .collect();
        let odd = Design::new(u, problems, 2, 1).unwrap();
        for d in [Design::singletons_and_pairs(5, 2, 1).unwrap(), odd] {
            for model in Model::ALL {
                let m = enumerate_columns(&d, model).unwrap();
                let s = model_summary(&d, model).unwrap();
                assert_eq!(s.columns, m.ncols() as u64, "{model:?}");
                assert_eq!(s.column_sum(), m.column_sum(), "{model:?}");
            }
        }
    }

    #[test]
    fn restrict_collapses_model_ii_to_model_i() {
        let d = Design::singletons_and_pairs(4, 2, 1).unwrap();
        let small: Vec<usize> = d.small_indices().collect();
        let ii = enumerate_columns(&d, Model::II).unwrap().restrict(&d, &small).unwrap();
        let i = enumerate_columns(&d, Model::I).unwrap().restrict(&d, &small).unwrap();
        assert_eq!(ii.ncols(), i.ncols());
        assert_eq!(i.ncols(), 16);
    }

    #[test]
    fn enumeration_size_guard() {
        let u = Universe::numbered(25).unwrap();
        let d = Design::new(u.clone(), vec![ChoiceProblem::grand(&u)], 0, 1).unwrap();
        assert!(matches!(enumerate_columns(&d, Model::I), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn triplet_dump_lists_one_entry_per_row_pair() {
        let d = Design::singletons_and_pairs(2, 1, 1).unwrap();
        let m = enumerate_columns(&d, Model::I).unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + m.ncols() * m.n_problems());
    }
}
