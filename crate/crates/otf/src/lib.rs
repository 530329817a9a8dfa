//! Quantifying and removing score unfairness with optimal transport.
//!
//! The central object is a cost that measures how far a vector of classifier
//! scores `h` is from the nearest *fair* score vector, where fairness is a set
//! of linear moment constraints (demographic parity, equalized odds, or any
//! concatenation of such rows). Formally, for a pairwise cost matrix `C` and a
//! constraint matrix `G`, the cost is the cheapest way to transport the mass
//! of `h` onto some nonnegative target whose constraint moments vanish:
//!
//! ```text
//!     minimize   <C, P>
//!     over       P >= 0          (n x n coupling)
//!     subject to P 1 = h         (rows carry the scores)
//!                G P' 1 = 0      (columns land on a fair vector)
//! ```
//!
//! This crate implements that cost three ways, and the machinery around it:
//!
//! * [`lp`] solves the program exactly with a dense two-phase simplex. It is
//!   deliberately small-scale (n <= 16) and exists as an independent oracle
//!   for the entropic solvers, plus a debugging backend for the CLI.
//! * [`solver`] smooths the objective with an entropy term of weight
//!   `epsilon` and maximizes the dual by exact coordinate ascent, entirely in
//!   log-space. It also solves the relaxed variant (fairness violation allowed
//!   up to the violation of `h` itself), whose value subtracted from the strict
//!   one yields the *adjusted* cost: zero for fair scores, positive otherwise,
//!   and differentiable in `h` through the dual variables. That gradient is
//!   what makes the cost usable as a training regularizer.
//! * [`constraints`] builds `G` from a dataset (parity and equalized-odds rows
//!   with expectations frozen over the full training set, concatenation,
//!   batch restriction), [`cost`] builds `C` (Euclidean distances on the
//!   non-sensitive features), and [`data`] loads, encodes, and standardizes
//!   tabular datasets or generates synthetic biased ones.
//! * [`train`] fits logistic models with the adjusted cost (or an L1 moment
//!   penalty) blended into the loss, and post-processes already-trained
//!   models; [`metrics`] scores the results (AUC, correlation violations,
//!   seed aggregation).
//!
//! The guide in `book/` walks through the same pipeline chapter by chapter,
//! and every snippet there compiles against this crate.

pub mod constraints;
pub mod cost;
pub mod data;
pub mod lp;
pub mod metrics;
pub mod solver;
pub mod train;

use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by pipeline stage rather than by module so that
/// callers (in particular the CLI, which maps these onto exit codes) can tell
/// data problems from numeric ones without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: Box<csv::Error>,
    },

    #[error("cannot parse {value:?} as a number (row {row}, column {column:?})")]
    Parse {
        value: String,
        row: usize,
        column: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("sensitive group {0:?} is empty over this dataset")]
    DegenerateGroup(String),

    #[error("no samples in cell {0:?}; cannot freeze its expectation")]
    DegenerateCell(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("batch index {index} out of range for n = {n}")]
    BatchIndexRange { index: usize, n: usize },

    #[error("duplicate batch index {0}")]
    BatchIndexDuplicate(usize),

    #[error("non-finite feature value in sample {0}")]
    NonFiniteFeature(usize),

    #[error("no strictly positive fair target exists: {0}")]
    Infeasible(String),

    #[error(
        "numeric blow-up in entropic solve ({context}); epsilon = {epsilon:.3e}, \
         max |C|/epsilon = {cost_scale:.3e}"
    )]
    Numeric {
        context: &'static str,
        epsilon: f64,
        cost_scale: f64,
    },

    #[error("linear program is infeasible (phase-1 residual {residual:.3e})")]
    LpInfeasible { residual: f64 },

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("lp oracle limited to n <= {limit}, got n = {n}")]
    LpTooLarge { n: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("labels contain a single class; {0} is undefined")]
    SingleClass(&'static str),

    #[error("empty label slice for y = {0}")]
    EmptyLabelSlice(u8),

    #[error("aggregate mixes fairness notions: {0} and {1}")]
    MixedNotions(String, String),

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
