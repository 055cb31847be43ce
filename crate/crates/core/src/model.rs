//! Domain types, dataset ingestion and validation, empirical frequencies,
//! leave-out frequencies, and clustered bootstrap resampling.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

/// Alternatives are addressed by bit position, so a universe holds at most 64.
pub const MAX_ALTERNATIVES: usize = 64;

/// Key accepted (and optionally written) for the grand problem.
pub const GRAND_KEY: &str = "ALL";

/// The non-default alternatives and the default.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Universe {
    alternatives: Vec<String>,
    default_id: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Universe {
    pub fn new(alternatives: Vec<String>, default_id: impl Into<String>) -> Result<Self> {
        let default_id = default_id.into();
        if alternatives.is_empty() {
            return Err(Error::validation("universe needs at least one non-default alternative"));
        }
        if alternatives.len() > MAX_ALTERNATIVES {
            return Err(Error::validation(format!(
                "universe has {} alternatives, at most {MAX_ALTERNATIVES} are supported",
                alternatives.len()
            )));
        }
        let mut index = HashMap::with_capacity(alternatives.len());
        for (i, id) in alternatives.iter().enumerate() {
            if id.is_empty() || id.contains('-') || id == GRAND_KEY {
                return Err(Error::validation(format!("invalid alternative id {id:?}")));
            }
            if *id == default_id {
                return Err(Error::validation(format!(
                    "default id {default_id:?} listed among the alternatives"
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate alternative id {id:?}")));
            }
        }
        Ok(Self {
            alternatives,
            default_id,
            index,
        })
    }

    /// Alternatives `1..=k` with default `0`, the convention of the embedded data.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((1..=k).map(|i| i.to_string()).collect(), "0")
    }

    /// Builds a universe from a bag of ids: numeric order when every id is an
    /// integer, lexicographic otherwise.
    pub fn infer<'a>(ids: impl IntoIterator<Item = &'a str>, default_id: &str) -> Result<Self> {
        let set: BTreeSet<&str> = ids.into_iter().collect();
        let mut ids: Vec<&str> = set.into_iter().collect();
        if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
            ids.sort_by_key(|s| s.parse::<u64>().unwrap());
        }
        Self::new(ids.into_iter().map(str::to_owned).collect(), default_id)
    }

    pub fn k(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alternatives(&self) -> &[String] {
        &self.alternatives
    }

    pub fn default_id(&self) -> &str {
        &self.default_id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn full_set(&self) -> AltSet {
        AltSet::full(self.k())
    }
}

/// A set of non-default alternatives, stored as a bitmask over universe indices.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct AltSet(u64);

impl AltSet {
    pub const EMPTY: AltSet = AltSet(0);

    pub fn from_bits(bits: u64) -> Self {
        AltSet(bits)
    }

    pub fn full(k: usize) -> Self {
        if k >= 64 {
            AltSet(u64::MAX)
        } else {
            AltSet((1u64 << k) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        AltSet(1u64 << i)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    pub fn intersects(self, other: AltSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: AltSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset(self, other: AltSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn union(self, other: AltSet) -> AltSet {
        AltSet(self.0 | other.0)
    }

    /// Member indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Size first, then lexicographic on the sorted member indices.
    pub fn canonical_cmp(self, other: AltSet) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.iter().cmp(other.iter()))
    }
}

/// A choice problem: a nonempty set of non-default alternatives. The default
/// is implicitly a member of every problem.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ChoiceProblem {
    members: AltSet,
}

impl ChoiceProblem {
    pub fn new(members: AltSet, universe: &Universe) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::validation("choice problem has no non-default alternative"));
        }
        if !members.is_subset(universe.full_set()) {
            return Err(Error::validation(
                "choice problem refers to alternatives outside the universe",
            ));
        }
        Ok(Self { members })
    }

    pub fn grand(universe: &Universe) -> Self {
        Self {
            members: universe.full_set(),
        }
    }

    /// Parses a dash-joined id list (any order) or `ALL`.
    pub fn parse(key: &str, universe: &Universe) -> Result<Self> {
        let key = key.trim();
        if key == GRAND_KEY {
            return Ok(Self::grand(universe));
        }
        let mut members = AltSet::EMPTY;
        for id in key.split('-') {
            let id = id.trim();
            if id == universe.default_id() {
                continue;
            }
            let idx = universe
                .index_of(id)
                .ok_or_else(|| Error::validation(format!("unknown alternative id {id:?} in choice set {key:?}")))?;
            if members.contains(idx) {
                return Err(Error::validation(format!(
                    "alternative {id:?} repeated in choice set {key:?}"
                )));
            }
            members.insert(idx);
        }
        Self::new(members, universe)
    }

    pub fn members(&self) -> AltSet {
        self.members
    }

    /// Number of non-default alternatives.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_grand(&self, universe: &Universe) -> bool {
        self.members == universe.full_set()
    }

    /// Canonical key: member ids in universe order, dash-joined.
    pub fn key(&self, universe: &Universe) -> String {
        let ids: Vec<&str> = self
            .members
            .iter()
            .map(|i| universe.alternatives()[i].as_str())
            .collect();
        ids.join("-")
    }
}

/// The collection of observed problems (grand problem last), the number of
/// small problems each subject faces, and the subject count.
#[derive(Clone, Debug, Serialize)]
pub struct Design {
    universe: Universe,
    problems: Vec<ChoiceProblem>,
    q: usize,
    n: usize,
    #[serde(skip)]
    lookup: HashMap<AltSet, usize>,
}

impl Design {
    /// Sorts problems canonically (grand last) and validates.
    pub fn new(universe: Universe, mut problems: Vec<ChoiceProblem>, q: usize, n: usize) -> Result<Self> {
        let full = universe.full_set();
        for p in &problems {
            if !p.members.is_subset(full) || p.members.is_empty() {
                return Err(Error::validation("problem outside the universe"));
            }
        }
        problems.sort_by(|a, b| {
            let ga = a.members == full;
            let gb = b.members == full;
            ga.cmp(&gb).then_with(|| a.members.canonical_cmp(b.members))
        });
        let mut lookup = HashMap::with_capacity(problems.len());
        for (i, p) in problems.iter().enumerate() {
            if lookup.insert(p.members, i).is_some() {
                return Err(Error::validation(format!(
                    "duplicate choice problem {}",
                    p.key(&universe)
                )));
            }
        }
        if problems.last().map(|p| p.members) != Some(full) {
            return Err(Error::validation("design does not contain the grand problem"));
        }
        if q > problems.len() - 1 {
            return Err(Error::validation(format!(
                "q = {q} exceeds the {} small problems",
                problems.len() - 1
            )));
        }
        Ok(Self {
            universe,
            problems,
            q,
            n,
            lookup,
        })
    }

    /// All 1- and 2-alternative problems plus the grand problem over
    /// alternatives `1..=k`.
    pub fn singletons_and_pairs(k: usize, q: usize, n: usize) -> Result<Self> {
        let universe = Universe::numbered(k)?;
        let full = universe.full_set();
        let mut problems = Vec::new();
        for i in 0..k {
            problems.push(ChoiceProblem::new(AltSet::singleton(i), &universe)?);
        }
        for i in 0..k {
            for j in i + 1..k {
                let s = AltSet::singleton(i).union(AltSet::singleton(j));
                if s != full {
                    problems.push(ChoiceProblem::new(s, &universe)?);
                }
            }
        }
        if k > 1 {
            problems.push(ChoiceProblem::grand(&universe));
        }
        Self::new(universe, problems, q, n)
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn problems(&self) -> &[ChoiceProblem] {
        &self.problems
    }

    pub fn n_problems(&self) -> usize {
        self.problems.len()
    }

    pub fn grand_index(&self) -> usize {
        self.problems.len() - 1
    }

    pub fn small_indices(&self) -> std::ops::Range<usize> {
        0..self.problems.len() - 1
    }

    pub fn k(&self) -> usize {
        self.universe.k()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_n(&self, n: usize) -> Self {
        let mut d = self.clone();
        d.n = n;
        d
    }

    pub fn problem_index(&self, problem: &ChoiceProblem) -> Option<usize> {
        self.lookup.get(&problem.members).copied()
    }

    pub fn problem_key(&self, i: usize) -> String {
        self.problems[i].key(&self.universe)
    }

    /// Expected small-problem cell size `2qn / (k(k+1))`.
    pub fn expected_cell_size(&self) -> f64 {
        let k = self.k() as f64;
        2.0 * self.q as f64 * self.n as f64 / (k * (k + 1.0))
    }

    /// True when every alternative is observed as a singleton problem.
    pub fn has_all_singletons(&self) -> bool {
        (0..self.k()).all(|i| self.lookup.contains_key(&AltSet::singleton(i)))
    }
}

impl PartialEq for Design {
    fn eq(&self, other: &Self) -> bool {
        self.universe == other.universe && self.problems == other.problems && self.q == other.q && self.n == other.n
    }
}

/// One response: subject, problem index into the design, and whether the
/// default was chosen.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Record {
    pub subject: usize,
    pub problem: usize,
    pub chose_default: bool,
}

/// Subject-level choice records. Records are held sorted by subject then
/// problem, so every derived quantity is independent of input order.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    design: Design,
    subject_ids: Vec<String>,
    records: Vec<Record>,
    offsets: Vec<usize>,
}

impl PanelDataset {
    pub fn new(design: Design, subject_ids: Vec<String>, mut records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("no records"));
        }
        let n_problems = design.n_problems();
        for r in &records {
            if r.problem >= n_problems {
                return Err(Error::validation(format!("problem index {} out of range", r.problem)));
            }
            if r.subject >= subject_ids.len() {
                return Err(Error::validation(format!("subject index {} out of range", r.subject)));
            }
        }
        records.sort_by_key(|r| (r.subject, r.problem));
        for w in records.windows(2) {
            if w[0].subject == w[1].subject && w[0].problem == w[1].problem {
                return Err(Error::validation(format!(
                    "duplicate record for subject {:?} and choice set {:?}",
                    subject_ids[w[0].subject],
                    design.problem_key(w[0].problem)
                )));
            }
        }
        let mut offsets = vec![0; subject_ids.len() + 1];
        for r in &records {
            offsets[r.subject + 1] += 1;
        }
        for s in 0..subject_ids.len() {
            offsets[s + 1] += offsets[s];
        }
        Ok(Self {
            design,
            subject_ids,
            records,
            offsets,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn subject_records(&self, subject: usize) -> &[Record] {
        &self.records[self.offsets[subject]..self.offsets[subject + 1]]
    }

    pub fn saw(&self, subject: usize, problem: usize) -> bool {
        self.subject_records(subject)
            .binary_search_by_key(&problem, |r| r.problem)
            .is_ok()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["subject_id", "choice_set", "chose_default"])?;
        for r in &self.records {
            w.write_record([
                self.subject_ids[r.subject].as_str(),
                self.design.problem_key(r.problem).as_str(),
                if r.chose_default { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-problem (shown, default-chosen) counts.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CellCount {
    pub shown: u64,
    pub default: u64,
}

impl CellCount {
    pub fn passive_frequency(&self) -> f64 {
        self.default as f64 / self.shown as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateDataset {
    design: Design,
    counts: Vec<CellCount>,
}

impl AggregateDataset {
    pub fn new(design: Design, counts: Vec<CellCount>) -> Result<Self> {
        if counts.len() != design.n_problems() {
            return Err(Error::validation(format!(
                "{} counts for {} problems",
                counts.len(),
                design.n_problems()
            )));
        }
        let uncovered: Vec<String> = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.shown == 0)
            .map(|(i, _)| design.problem_key(i))
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::validation(format!(
                "problems without observations: {}",
                uncovered.join(", ")
            )));
        }
        if let Some((i, _)) = counts.iter().enumerate().find(|(_, c)| c.default > c.shown) {
            return Err(Error::validation(format!(
                "default count exceeds shown count for {}",
                design.problem_key(i)
            )));
        }
        Ok(Self { design, counts })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn counts(&self) -> &[CellCount] {
        &self.counts
    }

    pub fn frequencies(&self) -> ProbVector {
        ProbVector::from_passive(self.counts.iter().map(CellCount::passive_frequency).collect())
            .expect("count ratios lie in [0, 1]")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["choice_set", "shown", "default"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let key = if i == self.design.grand_index() {
                GRAND_KEY.to_string()
            } else {
                self.design.problem_key(i)
            };
            w.write_record([key, c.shown.to_string(), c.default.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stacked (active, passive) probabilities, one pair per design problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbVector {
    pairs: Vec<[f64; 2]>,
}

impl ProbVector {
    pub const PAIR_TOLERANCE: f64 = 1e-12;

    pub fn new(pairs: Vec<[f64; 2]>) -> Result<Self> {
        for (i, [a, p]) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(a) || !(0.0..=1.0).contains(p) {
                return Err(Error::validation(format!("probability pair {i} outside [0, 1]")));
            }
            if (a + p - 1.0).abs() > Self::PAIR_TOLERANCE {
                return Err(Error::validation(format!("probability pair {i} does not sum to 1")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn from_passive(passive: Vec<f64>) -> Result<Self> {
        Self::new(passive.into_iter().map(|p| [1.0 - p, p]).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[[f64; 2]] {
        &self.pairs
    }

    pub fn passive(&self, i: usize) -> f64 {
        self.pairs[i][1]
    }

    pub fn active(&self, i: usize) -> f64 {
        self.pairs[i][0]
    }

    /// `[a_0, p_0, a_1, p_1, ...]`, the row layout of every type matrix.
    pub fn stacked(&self) -> Vec<f64> {
        self.pairs.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Stacked rows for a subset of problems, in the given order.
    pub fn stacked_rows(&self, problems: &[usize]) -> Vec<f64> {
        problems.iter().flat_map(|&i| self.pairs[i]).collect()
    }
}

impl fmt::Display for ProbVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs.iter().map(|p| format!("{:.4}", p[1])).collect();
        write!(f, "passive[{}]", parts.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Ingestion

fn parse_flag(raw: &str, line: u64) -> Result<bool> {
    match raw.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("chose_default must be 0 or 1, got {other:?}"),
        }),
    }
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<bool> {
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Ok(false);
    }
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(true)
}

/// Reads a panel CSV (`subject_id,choice_set,chose_default`). Without a
/// universe, alternatives are inferred from the ids (default `0`), problems
/// from the distinct sets, `n` from the subject count and `q` as the largest
/// number of small problems any subject answered.
pub fn read_panel<R: Read>(reader: R, universe: Option<&Universe>) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    if !check_header(&mut rdr, &["subject_id", "choice_set", "chose_default"])? {
        return Err(Error::validation("no records"));
    }
    let mut raw = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let subject = row[0].trim().to_string();
        if subject.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty subject_id".into(),
            });
        }
        let set = row[1].trim().to_string();
        if set.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty choice_set".into(),
            });
        }
        let flag = parse_flag(&row[2], line)?;
        raw.push((line, subject, set, flag));
    }
    if raw.is_empty() {
        return Err(Error::validation("no records"));
    }

    let universe = match universe {
        Some(u) => u.clone(),
        None => {
            let ids = raw
                .iter()
                .filter(|r| r.2 != GRAND_KEY)
                .flat_map(|r| r.2.split('-').map(str::trim))
                .filter(|id| *id != "0");
            Universe::infer(ids, "0")?
        }
    };

    let mut subject_index: HashMap<String, usize> = HashMap::new();
    let mut subject_ids = Vec::new();
    let mut parsed = Vec::with_capacity(raw.len());
    let mut sets: Vec<ChoiceProblem> = Vec::new();
    let mut seen_sets: HashMap<AltSet, ()> = HashMap::new();
    let mut seen_pairs = std::collections::HashSet::new();
    for (line, subject, set, flag) in raw {
        let problem = ChoiceProblem::parse(&set, &universe).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
        if seen_sets.insert(problem.members(), ()).is_none() {
            sets.push(problem);
        }
        let s = *subject_index.entry(subject.clone()).or_insert_with(|| {
            subject_ids.push(subject);
            subject_ids.len() - 1
        });
        if !seen_pairs.insert((s, problem.members())) {
            return Err(Error::validation(format!(
                "line {line}: duplicate record for subject {:?} and choice set {set:?}",
                subject_ids[s]
            )));
        }
        parsed.push((s, problem, flag));
    }
    if !seen_sets.contains_key(&universe.full_set()) {
        return Err(Error::validation("grand problem never observed"));
    }

    let n = subject_ids.len();
    let full = universe.full_set();
    let mut small_per_subject = vec![0usize; n];
    for (s, p, _) in &parsed {
        if p.members() != full {
            small_per_subject[*s] += 1;
        }
    }
    let q = small_per_subject.into_iter().max().unwrap_or(0);
    let design = Design::new(universe, sets, q, n)?;
    let records = parsed
        .into_iter()
        .map(|(subject, p, chose_default)| Record {
            subject,
            problem: design.problem_index(&p).expect("problem registered"),
            chose_default,
        })
        .collect();
    PanelDataset::new(design, subject_ids, records)
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<PanelDataset> {
    read_panel(std::fs::File::open(path)?, None)
}

/// Reads an aggregate CSV (`choice_set,shown,default`). `n` is taken as the
/// grand problem's shown count and `q` as the rounded ratio of small-problem
/// observations to `n`.
pub fn read_aggregate<R: Read>(reader: R, universe: Option<&Universe>) -> Result<AggregateDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    if !check_header(&mut rdr, &["choice_set", "shown", "default"])? {
        return Err(Error::validation("no records"));
    }
    let mut raw = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} must be a nonnegative integer, got {s:?}"),
            })
        };
        raw.push((
            line,
            row[0].trim().to_string(),
            num(&row[1], "shown")?,
            num(&row[2], "default")?,
        ));
    }
    if raw.is_empty() {
        return Err(Error::validation("no records"));
    }
    let universe = match universe {
        Some(u) => u.clone(),
        None => {
            let ids = raw
                .iter()
                .filter(|r| r.1 != GRAND_KEY)
                .flat_map(|r| r.1.split('-').map(str::trim))
                .filter(|id| *id != "0");
            Universe::infer(ids, "0")?
        }
    };
    let mut entries = Vec::with_capacity(raw.len());
    for (line, key, shown, default) in raw {
        let p = ChoiceProblem::parse(&key, &universe).map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        entries.push((p, CellCount { shown, default }));
    }
    let full = universe.full_set();
    let grand_shown = entries
        .iter()
        .find(|(p, _)| p.members() == full)
        .map(|(_, c)| c.shown)
        .ok_or_else(|| Error::validation("grand problem missing from aggregate file"))?;
    let small_total: u64 = entries
        .iter()
        .filter(|(p, _)| p.members() != full)
        .map(|(_, c)| c.shown)
        .sum();
    let n = grand_shown as usize;
    let q = if n == 0 {
        0
    } else {
        (small_total as f64 / n as f64).round() as usize
    };
    let problems: Vec<ChoiceProblem> = entries.iter().map(|(p, _)| *p).collect();
    let design = Design::new(universe, problems, q.min(entries.len().saturating_sub(1)), n)?;
    let mut counts = vec![CellCount::default(); design.n_problems()];
    for (p, c) in entries {
        counts[design.problem_index(&p).expect("registered")] = c;
    }
    AggregateDataset::new(design, counts)
}

pub fn load_aggregate(path: impl AsRef<Path>) -> Result<AggregateDataset> {
    read_aggregate(std::fs::File::open(path)?, None)
}

// ---------------------------------------------------------------------------
// Frequencies and resampling

/// Per-problem counts; errors if any design problem has no observation.
pub fn aggregate(panel: &PanelDataset) -> Result<AggregateDataset> {
    AggregateDataset::new(panel.design.clone(), tally(panel))
}

pub(crate) fn tally(panel: &PanelDataset) -> Vec<CellCount> {
    let mut counts = vec![CellCount::default(); panel.design.n_problems()];
    for r in &panel.records {
        counts[r.problem].shown += 1;
        counts[r.problem].default += r.chose_default as u64;
    }
    counts
}

/// Grand-problem `(defaults, shown)` among subjects who did not see `problem`.
/// The resulting sample is disjoint from the subjects who did.
pub fn leave_out_grand_frequency(panel: &PanelDataset, problem: usize) -> Result<(u64, u64)> {
    let grand = panel.design.grand_index();
    if problem == grand {
        return Err(Error::validation(
            "leave-out frequency is defined for small problems only",
        ));
    }
    if problem > grand {
        return Err(Error::validation(format!("problem index {problem} out of range")));
    }
    let (mut defaults, mut shown) = (0u64, 0u64);
    for s in 0..panel.n_subjects() {
        if panel.saw(s, problem) {
            continue;
        }
        if let Ok(pos) = panel.subject_records(s).binary_search_by_key(&grand, |r| r.problem) {
            shown += 1;
            defaults += panel.subject_records(s)[pos].chose_default as u64;
        }
    }
    if shown == 0 {
        return Err(Error::EmptyLeaveOut {
            problem: panel.design.problem_key(problem),
        });
    }
    Ok((defaults, shown))
}

/// Draws `n` subjects uniformly with replacement and copies all their
/// records. Drawn copies get ids `<original>#<draw>`.
pub fn cluster_resample(panel: &PanelDataset, seed: u64) -> PanelDataset {
    let mut rng = rng::stream(seed, rng::MAIN_STREAM);
    let n = panel.n_subjects();
    let mut ids = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(panel.records.len());
    for draw in 0..n {
        let s = rng.random_range(0..n);
        ids.push(format!("{}#{draw}", panel.subject_ids[s]));
        records.extend(panel.subject_records(s).iter().map(|r| Record { subject: draw, ..*r }));
    }
    PanelDataset::new(panel.design.clone(), ids, records).expect("resample of a valid panel")
}

/// Counts of a cluster resample drawn from `rng`, without materializing the
/// panel. Draws subjects in the same sequence as [`cluster_resample`].
pub(crate) fn resample_counts<R: Rng>(panel: &PanelDataset, rng: &mut R, counts: &mut [CellCount]) {
    counts.iter_mut().for_each(|c| *c = CellCount::default());
    let n = panel.n_subjects();
    for _ in 0..n {
        let s = rng.random_range(0..n);
        for r in panel.subject_records(s) {
            counts[r.problem].shown += 1;
            counts[r.problem].default += r.chose_default as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn twelve() -> Universe {
        Universe::numbered(12).unwrap()
    }

    fn panel_from(csv: &str) -> Result<PanelDataset> {
        read_panel(csv.as_bytes(), None)
    }

    #[test]
    fn universe_rejects_default_and_duplicates() {
        assert!(Universe::new(vec!["a".into(), "a".into()], "d").is_err());
        assert!(Universe::new(vec!["a".into(), "d".into()], "d").is_err());
        assert!(Universe::new(vec![], "d").is_err());
    }

    #[test]
    fn problem_keys_are_canonical() {
        let u = twelve();
        let a = ChoiceProblem::parse("9-1", &u).unwrap();
        let b = ChoiceProblem::parse("1-9", &u).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.key(&u), "1-9");
        assert!(ChoiceProblem::parse("ALL", &u).unwrap().is_grand(&u));
        assert!(ChoiceProblem::parse("13", &u).is_err());
        assert!(ChoiceProblem::parse("1-1", &u).is_err());
    }

    #[test]
    fn row_maps_to_record() {
        let u = twelve();
        let csv = "subject_id,choice_set,chose_default\ns1,9,1\ns1,ALL,0\n";
        let panel = read_panel(csv.as_bytes(), Some(&u)).unwrap();
        let nine = panel
            .design()
            .problem_index(&ChoiceProblem::parse("9", &u).unwrap())
            .unwrap();
        assert!(panel.records().contains(&Record {
            subject: 0,
            problem: nine,
            chose_default: true
        }));
        assert_eq!(panel.design().k(), 12);
    }

    #[test]
    fn duplicate_record_is_rejected() {
        let csv = "subject_id,choice_set,chose_default\ns1,9,1\ns1,9,0\ns1,1-9,0\n";
        let err = panel_from(csv).unwrap_err();
        assert!(err.to_string().contains("duplicate record"), "{err}");
    }

    #[test]
    fn empty_file_has_no_records() {
        assert!(panel_from("").unwrap_err().to_string().contains("no records"));
        let header_only = "subject_id,choice_set,chose_default\n";
        assert!(panel_from(header_only).unwrap_err().to_string().contains("no records"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "subject_id,choice_set,chose_default\ns1,1-2,0\ns1,ALL,maybe\n";
        match panel_from(csv).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let short = "subject_id,choice_set,chose_default\ns1,1-2\n";
        assert!(matches!(panel_from(short).unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_alternative_is_rejected() {
        let u = Universe::numbered(3).unwrap();
        let csv = "subject_id,choice_set,chose_default\ns1,4,1\n";
        let err = read_panel(csv.as_bytes(), Some(&u)).unwrap_err();
        assert!(err.to_string().contains("unknown alternative"), "{err}");
    }

    #[test]
    fn aggregate_single_default_choice() {
        let csv = "subject_id,choice_set,chose_default\ns1,1,1\n";
        let agg = aggregate(&panel_from(csv).unwrap()).unwrap();
        assert_eq!(agg.frequencies().passive(0), 1.0);
    }

    #[test]
    fn aggregate_reports_uncovered_problems() {
        let u = Universe::numbered(2).unwrap();
        let problems = vec![
            ChoiceProblem::parse("1", &u).unwrap(),
            ChoiceProblem::parse("2", &u).unwrap(),
            ChoiceProblem::grand(&u),
        ];
        let design = Design::new(u, problems, 1, 1).unwrap();
        let panel = PanelDataset::new(
            design,
            vec!["s".into()],
            vec![Record {
                subject: 0,
                problem: 2,
                chose_default: false,
            }],
        )
        .unwrap();
        let err = aggregate(&panel).unwrap_err().to_string();
        assert!(err.contains("1") && err.contains("2"), "{err}");
    }

    fn toy_panel() -> PanelDataset {
        // s1, s2 saw {1}; grand defaults among s3, s4 are 1 of 2
        let csv = "subject_id,choice_set,chose_default\n\
                   s1,1,1\ns1,ALL,1\n\
                   s2,1,0\ns2,ALL,1\n\
                   s3,2,1\ns3,ALL,1\n\
                   s4,2,0\ns4,ALL,0\n";
        panel_from(csv).unwrap()
    }

    #[test]
    fn leave_out_toy_panel() {
        let panel = toy_panel();
        let one = panel
            .design()
            .problem_index(&ChoiceProblem::parse("1", panel.design().universe()).unwrap())
            .unwrap();
        assert_eq!(leave_out_grand_frequency(&panel, one).unwrap(), (1, 2));
        let grand = panel.design().grand_index();
        assert!(leave_out_grand_frequency(&panel, grand).is_err());
    }

    #[test]
    fn leave_out_edge_cases() {
        let csv = "subject_id,choice_set,chose_default\ns1,1,1\ns1,ALL,0\ns2,1,0\ns2,ALL,1\ns3,2,0\n";
        let panel = panel_from(csv).unwrap();
        // everyone with a grand record saw {1}
        assert!(matches!(
            leave_out_grand_frequency(&panel, 0),
            Err(Error::EmptyLeaveOut { .. })
        ));
        // nobody with a grand record saw {2}: full grand counts
        let full = tally(&panel)[panel.design().grand_index()];
        assert_eq!(
            leave_out_grand_frequency(&panel, 1).unwrap(),
            (full.default, full.shown)
        );
    }

    #[test]
    fn resample_single_subject_is_identity() {
        let csv = "subject_id,choice_set,chose_default\ns1,1,1\ns1,2,0\ns1,ALL,0\n";
        let panel = panel_from(csv).unwrap();
        let r = cluster_resample(&panel, 11);
        assert_eq!(r.records(), panel.records());
        assert_eq!(r.design(), panel.design());
    }

    #[test]
    fn resample_is_deterministic_and_matches_fast_path() {
        let panel = toy_panel();
        let a = cluster_resample(&panel, 99);
        let b = cluster_resample(&panel, 99);
        assert_eq!(a, b);
        let mut counts = vec![CellCount::default(); panel.design().n_problems()];
        resample_counts(&panel, &mut rng::stream(99, rng::MAIN_STREAM), &mut counts);
        assert_eq!(counts, tally(&a));
    }

    #[test]
    fn resample_multiplicity_averages_one() {
        let csv = "subject_id,choice_set,chose_default\ns1,1,1\ns1,ALL,0\ns2,2,0\ns2,ALL,1\n";
        let panel = panel_from(csv).unwrap();
        let reps = 10_000;
        let mut total = 0usize;
        for seed in 0..reps {
            let r = cluster_resample(&panel, seed);
            total += r.subject_ids().iter().filter(|id| id.starts_with("s1#")).count();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean multiplicity {mean}");
    }

    #[test]
    fn resample_preserves_subject_record_sets() {
        let panel = toy_panel();
        let r = cluster_resample(&panel, 5);
        for s in 0..r.n_subjects() {
            let orig_id = r.subject_ids()[s].split('#').next().unwrap();
            let orig = panel.subject_ids().iter().position(|x| x == orig_id).unwrap();
            let a: Vec<_> = r
                .subject_records(s)
                .iter()
                .map(|x| (x.problem, x.chose_default))
                .collect();
            let b: Vec<_> = panel
                .subject_records(orig)
                .iter()
                .map(|x| (x.problem, x.chose_default))
                .collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn aggregate_csv_round_trip() {
        let data = crate::paper_data::dataset();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = read_aggregate(buf.as_slice(), None).unwrap();
        assert_eq!(back, data);
    }

    proptest! {
        #[test]
        fn aggregate_is_order_invariant(rows in proptest::collection::vec((0usize..6, 0usize..4, any::<bool>()), 1..40), seed in any::<u64>()) {
            let sets = ["1", "2", "3", "1-2", "ALL"];
            let mut lines: Vec<String> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (s, p, d) in &rows {
                if seen.insert((*s, *p)) {
                    lines.push(format!("s{s},{},{}", sets[*p], *d as u8));
                }
            }
            for s in 0..6 { if seen.insert((s, 4)) { lines.push(format!("s{s},ALL,0")); } }
            let u = Universe::numbered(3).unwrap();
            let original = read_panel(format!("subject_id,choice_set,chose_default\n{}\n", lines.join("\n")).as_bytes(), Some(&u)).unwrap();
            let mut shuffled = lines.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng::stream(seed, 0));
            let other = read_panel(format!("subject_id,choice_set,chose_default\n{}\n", shuffled.join("\n")).as_bytes(), Some(&u)).unwrap();
            prop_assert_eq!(tally(&original), tally(&other));
            for c in tally(&original) {
                if c.shown > 0 {
                    let p = c.passive_frequency();
                    prop_assert!((0.0..=1.0).contains(&p));
                    prop_assert_eq!(c.default + (c.shown - c.default), c.shown);
                }
            }
        }

        #[test]
        fn leave_out_plus_seen_equals_grand(rows in proptest::collection::vec((0usize..8, 0usize..3, any::<bool>(), any::<bool>()), 1..30)) {
            let sets = ["1", "2", "1-2"];
            let mut lines = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (s, p, d, g) in &rows {
                if seen.insert((*s, *p)) { lines.push(format!("s{s},{},{}", sets[*p], *d as u8)); }
                if seen.insert((*s, 99)) { lines.push(format!("s{s},ALL,{}", *g as u8)); }
            }
            let u = Universe::numbered(3).unwrap();
            let panel = read_panel(format!("subject_id,choice_set,chose_default\n{}\n", lines.join("\n")).as_bytes(), Some(&u)).unwrap();
            let grand = panel.design().grand_index();
            let full = tally(&panel)[grand];
            for a in panel.design().small_indices() {
                let (mut d, mut s) = (0, 0);
                for subj in 0..panel.n_subjects() {
                    if panel.saw(subj, a) {
                        for r in panel.subject_records(subj) {
                            if r.problem == grand { s += 1; d += r.chose_default as u64; }
                        }
                    }
                }
                match leave_out_grand_frequency(&panel, a) {
                    Ok((ld, ls)) => { prop_assert_eq!(ld + d, full.default); prop_assert_eq!(ls + s, full.shown); }
                    Err(Error::EmptyLeaveOut { .. }) => prop_assert_eq!(s, full.shown),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }
}
