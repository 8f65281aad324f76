//! Simulation, benchmarking, and numerical verification for online
//! bipartite matching with stochastic rewards.
//!
//! Offline vertices are known in advance and can absorb repeated match
//! attempts until one succeeds; online vertices arrive one by one and are
//! matched irrevocably. A match of online vertex `v` to offline vertex `u`
//! succeeds with probability `p_uv`. The objective is the expected number
//! of successful offline vertices.
//!
//! The crate provides:
//!
//! * [`instance`] — instances, generators, and realizations of randomness;
//! * [`simul`] — the Ranking, Stochastic Balance (integral and fractional),
//!   and greedy simulators with gain-split dual ledgers;
//! * [`lpcore`] — a small dense simplex solver with primal/dual certificates;
//! * [`bench`] — benchmark values (Matching LP, Configuration LPs, the
//!   adaptive offline optimum) and exact/Monte Carlo algorithm values;
//! * [`gainfn`] — gain-splitting functions, the competitive-ratio constants,
//!   and the factor-revealing alternating optimization;
//! * [`dualcheck`] — empirical verification of approximate dual feasibility
//!   and the structural lemmas.

pub mod bench;
pub mod dualcheck;
pub mod gainfn;
pub mod instance;
pub mod lpcore;
pub mod quad;
pub mod simul;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("probability out of range: {0}")]
    ProbabilityOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("linear program error: {0}")]
    Lp(String),
    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
