use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "rumoverload",
    version,
    about = "Choice-overload tests for stochastic choice data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<std::path::PathBuf>,
    /// Defaults to csv for `simulate` and json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub feasibility_tol: Option<f64>,
    #[arg(long, global = true)]
    pub kkt_tol: Option<f64>,
    #[arg(long, global = true)]
    pub integrality_tol: Option<f64>,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    I,
    Ii,
    Iii,
}

impl From<ModelArg> for rumoverload::Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::I => rumoverload::Model::I,
            ModelArg::Ii => rumoverload::Model::II,
            ModelArg::Iii => rumoverload::Model::III,
        }
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    All,
    ExcludeGrand,
}

impl From<ScopeArg> for rumoverload::rum_test::Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::All => rumoverload::rum_test::Scope::AllData,
            ScopeArg::ExcludeGrand => rumoverload::rum_test::Scope::ExcludeGrand,
        }
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Finite,
    Asymptotic,
    Both,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationArg {
    Rational,
    Overload,
    MarginalMatch,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Min, RUM and feasible bounds on the grand problem.
    Bounds {
        /// Data file (panel or aggregate CSV), or `paper` for the embedded data.
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = ModelArg::I)]
        model: ModelArg,
    },
    /// Monotonicity tests of the grand problem against every smaller one.
    TestMin {
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 1000)]
        replications: usize,
        #[arg(long, env = "RUMOVERLOAD_SEED")]
        seed: Option<u64>,
    },
    /// Bootstrap test of a random-utility model.
    TestRum {
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = ModelArg::I)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = ScopeArg::All)]
        scope: ScopeArg,
        #[arg(long = "B", default_value_t = 500)]
        replications: usize,
        #[arg(long, env = "RUMOVERLOAD_SEED")]
        seed: Option<u64>,
    },
    /// Cone projection by column generation.
    Colgen {
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = ModelArg::I)]
        model: ModelArg,
        /// Bound every type weight below by τ/H.
        #[arg(long)]
        tighten: bool,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Random columns added to the seed set.
        #[arg(long, default_value_t = 300)]
        extra: usize,
        #[arg(long, env = "RUMOVERLOAD_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Simulated subject panel, written as CSV.
    Simulate {
        /// Design and frequencies to copy; otherwise a design of all singletons and pairs is built.
        #[arg(long)]
        input: Option<String>,
        #[arg(long, required_unless_present = "input")]
        k: Option<usize>,
        #[arg(long, required_unless_present = "input")]
        q: Option<usize>,
        #[arg(long, required_unless_present = "input")]
        n: Option<usize>,
        #[arg(long, value_enum, required_unless_present = "marginal_match")]
        population: Option<PopulationArg>,
        /// Independent responses at the observed default shares of the input.
        #[arg(long, conflicts_with = "population", requires = "input")]
        marginal_match: bool,
        /// With marginal matching, reproduce the input cell counts exactly.
        #[arg(long)]
        exact_counts: bool,
        /// Dirichlet concentration of random rational populations.
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        /// Share of each type moved to its grand-problem default switcher.
        #[arg(long, default_value_t = 0.3)]
        overload_share: f64,
        #[arg(long, env = "RUMOVERLOAD_SEED")]
        seed: Option<u64>,
    },
    /// Descriptives, bounds and, for panel data, every test.
    Report {
        #[arg(long)]
        input: String,
        #[arg(long = "B", default_value_t = 500)]
        replications: usize,
        /// Uniform draws for the restrictiveness measure; 0 skips it.
        #[arg(long, default_value_t = 0)]
        draws: usize,
        #[arg(long, env = "RUMOVERLOAD_SEED")]
        seed: Option<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds { .. } => "bounds",
            Command::TestMin { .. } => "test-min",
            Command::TestRum { .. } => "test-rum",
            Command::Colgen { .. } => "colgen",
            Command::Simulate { .. } => "simulate",
            Command::Report { .. } => "report",
        }
    }
}
