//! Evaluation pools, ranking/regression metrics, and cross-validated
//! reporting.

mod crossval;
mod metrics;
mod pool;

pub use crossval::{
    cross_validate, fold_assignments, fold_of, mean_and_population_std, stable_id_hash,
    MetricReport,
};
pub use metrics::{average_precision_at_k, map_at_20, pearson_r_times_100, MapResult};
pub use pool::{
    build_pool, candidate_id, rank_candidates, rank_order, EvalPool, PoolCandidate, PoolQuery,
    PoolVariant,
};
