//! Multi-objective exploration of accelerator designs: a discrete design
//! space with a continuous embedding, Gaussian-process surrogates, analytic
//! two-objective expected hypervolume improvement, an NSGA-II baseline and
//! uniform random search, all tracked by exact 2-D hypervolume.

pub mod ehvi;
pub mod gp;
pub mod nsga2;
pub mod pareto;
pub mod problem;
pub mod report;
pub mod runner;
pub mod space;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use ehvi::ehvi;
pub use gp::{fit_surrogate, Gp, GpConfig};
pub use pareto::{dominates, hypervolume, ArchiveEntry, Objectives, ParetoArchive};
pub use problem::{Evaluation, FeasibilityMemo, Problem, Stage};
pub use report::{pareto_report, FrontierRow};
pub use runner::{propose_next, run_dse, sobol_init, DseHistory, DseOptions, DseRun, HistoryEntry, Method};
pub use space::{Config, DesignSpace};

#[derive(Debug, Error)]
pub enum DseError {
    #[error("invalid design space: {0}")]
    Space(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("search space error: {0}")]
    SearchSpace(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid options: {0}")]
    Options(String),
}

/// Independent random streams derived from one run seed, so that each
/// component can be reproduced in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Sobol = 1,
    GpRestarts = 2,
    Pool = 3,
    Nsga2 = 4,
    Random = 5,
}

pub fn substream(seed: u64, stream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
