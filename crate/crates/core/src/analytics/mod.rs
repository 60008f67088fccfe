//! Graph metrics, community detection, precision auditing and dataset overlap.
//!
//! All functions here read an immutable [`GraphView`](crate::graph::GraphView)
//! or store and never mutate it.

mod eval;
mod louvain;
mod modularity;
mod overlap;
mod stats;

pub use eval::{evaluate_precision, precision, sample_relations, EvalError, PrecisionReport};
pub use louvain::detect_communities;
pub use modularity::{modularity, Algorithm, ModularityError, ModularityResult, Partition};
pub use overlap::{compare_datasets, MatchPolicy, OverlapReport};
pub use stats::{compute_stats, metrics_scope, GraphStats, Scope, UndirectedGraph};
