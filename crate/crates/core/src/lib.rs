//! Tests of stochastic choice data for choice overload.
//!
//! Two families of tests are provided. Monotonicity tests compare the default
//! share in the grand problem with the smallest default share among smaller
//! problems ([`min_tests`]). Random-utility tests project estimated
//! active/passive probabilities onto the cone spanned by deterministic choice
//! types and bootstrap the projection distance ([`rum_test`]), for plain RUM
//! and for two extensions that let types switch to the default at large sets.
//!
//! Supporting modules: domain types and ingestion ([`model`]), type
//! enumeration ([`type_space`]), solvers ([`optim`]), population-level and
//! feasible bounds ([`bounds`]), column generation ([`colgen`]) and
//! simulation ([`sim`]).

#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod colgen;
pub mod error;
pub mod min_tests;
pub mod model;
pub mod optim;
pub mod paper_data;
pub mod rng;
pub mod sim;
pub mod type_space;

pub use error::{Error, Result};
pub use model::{
    aggregate, cluster_resample, leave_out_grand_frequency, load_aggregate, load_panel, read_aggregate, read_panel,
    AggregateDataset, AltSet, CellCount, ChoiceProblem, Design, PanelDataset, ProbVector, Record, Universe,
};

pub use optim::Tolerances;
pub use type_space::{enumerate_columns, Model, Tag, TypeColumn, TypeMatrix};
