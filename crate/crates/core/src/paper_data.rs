//! The experimental dataset: 12 non-default options (ids `1`..`12`) plus the
//! default `0`, every 1- and 2-option subset and the grand set, with how often
//! each set was shown and how often the default was chosen.
//!
//! Only per-set counts were published. Panel-level records are not available
//! and nothing here pretends otherwise.

use crate::model::{AggregateDataset, CellCount, ChoiceProblem, Design, Universe};

pub const SUBJECTS: usize = 1832;
pub const SMALL_SETS_PER_SUBJECT: usize = 9;
pub const GRAND_SHOWN: u64 = 1832;
pub const GRAND_DEFAULT: u64 = 409;

/// `(choice set, times shown, times default chosen)` for the 78 small sets.
pub const SMALL_SET_COUNTS: [(&str, u64, u64); 78] = [
    ("1", 204, 199),
    ("2", 193, 188),
    ("3", 218, 210),
    ("4", 232, 225),
    ("5", 227, 214),
    ("6", 230, 226),
    ("7", 221, 212),
    ("8", 229, 212),
    ("9", 201, 18),
    ("10", 199, 190),
    ("11", 194, 20),
    ("12", 195, 184),
    ("1-2", 209, 203),
    ("1-3", 225, 217),
    ("1-4", 185, 175),
    ("1-5", 204, 190),
    ("1-6", 208, 199),
    ("1-7", 203, 188),
    ("1-8", 225, 203),
    ("1-9", 211, 24),
    ("1-10", 218, 215),
    ("1-11", 223, 30),
    ("1-12", 235, 219),
    ("2-3", 229, 219),
    ("2-4", 213, 202),
    ("2-5", 218, 202),
    ("2-6", 215, 208),
    ("2-7", 250, 231),
    ("2-8", 193, 178),
    ("2-9", 207, 36),
    ("2-10", 192, 185),
    ("2-11", 194, 24),
    ("2-12", 192, 182),
    ("3-4", 191, 182),
    ("3-5", 218, 203),
    ("3-6", 198, 194),
    ("3-7", 205, 192),
    ("3-8", 215, 194),
    ("3-9", 207, 44),
    ("3-10", 199, 190),
    ("3-11", 200, 38),
    ("3-12", 231, 219),
    ("4-5", 219, 190),
    ("4-6", 215, 200),
    ("4-7", 213, 191),
    ("4-8", 216, 187),
    ("4-9", 193, 35),
    ("4-10", 219, 204),
    ("4-11", 210, 28),
    ("4-12", 197, 186),
    ("5-6", 224, 200),
    ("5-7", 209, 183),
    ("5-8", 210, 186),
    ("5-9", 224, 45),
    ("5-10", 199, 189),
    ("5-11", 214, 36),
    ("5-12", 213, 199),
    ("6-7", 205, 189),
    ("6-8", 200, 178),
    ("6-9", 218, 44),
    ("6-10", 209, 204),
    ("6-11", 223, 31),
    ("6-12", 221, 210),
    ("7-8", 223, 202),
    ("7-9", 206, 36),
    ("7-10", 199, 182),
    ("7-11", 205, 30),
    ("7-12", 221, 205),
    ("8-9", 226, 32),
    ("8-10", 205, 182),
    ("8-11", 222, 33),
    ("8-12", 221, 204),
    ("9-10", 192, 31),
    ("9-11", 202, 23),
    ("9-12", 223, 42),
    ("10-11", 219, 33),
    ("10-12", 193, 187),
    ("11-12", 224, 36),
];

pub fn universe() -> Universe {
    Universe::numbered(12).expect("static universe")
}

pub fn design() -> Design {
    let universe = universe();
    let mut problems: Vec<ChoiceProblem> = SMALL_SET_COUNTS
        .iter()
        .map(|(key, _, _)| ChoiceProblem::parse(key, &universe).expect("static key"))
        .collect();
    problems.push(ChoiceProblem::grand(&universe));
    Design::new(universe, problems, SMALL_SETS_PER_SUBJECT, SUBJECTS).expect("static design")
}

pub fn dataset() -> AggregateDataset {
    let design = design();
    let mut counts = vec![CellCount::default(); design.n_problems()];
    for (key, shown, default) in SMALL_SET_COUNTS {
        let problem = ChoiceProblem::parse(key, design.universe()).expect("static key");
        let idx = design.problem_index(&problem).expect("static problem");
        counts[idx] = CellCount { shown, default };
    }
    counts[design.grand_index()] = CellCount {
        shown: GRAND_SHOWN,
        default: GRAND_DEFAULT,
    };
    AggregateDataset::new(design, counts).expect("static counts")
}
