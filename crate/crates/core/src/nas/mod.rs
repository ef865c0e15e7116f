//! Energy- and memory-constrained architecture search.

pub mod constraints;
pub mod pareto;
pub mod rho;
pub mod search;
pub mod space;
pub mod supernet;

pub use constraints::{
    dense_ops, memory_footprint, prune_infeasible, prune_infeasible_with, ConstraintSet, Footprint,
    ScreenedCandidate, MCU_M_MAX, NEUROMORPHIC_M_MAX,
};
pub use pareto::{knee_index, knee_point, pareto_front, pareto_front_indices, ParetoPoint};
pub use rho::{estimate_rho, RhoEstimate, RHO_BATCHES};
pub use search::{
    candidate_seed, evaluate_candidate, proxy_eval, proxy_split, run_search, spearman, CandidateResult,
    NasConfig, ProxyOutcome, SearchReport,
};
pub use space::{enumerate_space, SearchSpace};
pub use supernet::{supernet_build, Supernet};
