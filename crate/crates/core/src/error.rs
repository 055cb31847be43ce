use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty leave-out cell for problem {problem}: every subject with a grand-problem record also saw it")]
    EmptyLeaveOut { problem: String },

    #[error("design has {k} alternatives; full enumeration is capped at {limit}, use column generation")]
    TooLarge { k: usize, limit: usize },

    #[error("nnls did not converge after {iterations} iterations (objective {objective:.6e}, kkt residual {kkt_residual:.3e})")]
    NnlsNonConvergence {
        iterations: usize,
        objective: f64,
        kkt_residual: f64,
        best_nu: Vec<f64>,
    },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("branch-and-bound: {0}")]
    Infeasible(String),

    #[error("column generation stopped after {iterations} iterations with pricing value {gap:.3e}")]
    ColgenLimit { iterations: usize, gap: f64 },

    #[error("rank condition not met: rank {achieved} of {required} after {columns} columns")]
    RankDeficient {
        achieved: usize,
        required: usize,
        columns: usize,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NnlsNonConvergence { .. }
                | Error::Lp(_)
                | Error::Infeasible(_)
                | Error::ColgenLimit { .. }
                | Error::RankDeficient { .. }
        )
    }
}
