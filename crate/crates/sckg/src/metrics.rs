//! Table-style metrics report: one row per scope with degree, both density
//! conventions and Louvain modularity.

use std::collections::BTreeSet;

use sckg_core::analytics::{compute_stats, detect_communities, metrics_scope, GraphStats, ModularityResult, Scope};
use sckg_core::graph::GraphStore;
use sckg_core::model::EntityKind;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scope: String,
    pub stats: GraphStats,
    /// `None` when the scope has no edges.
    pub modularity: Option<ModularityResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub include_unverified: bool,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

/// `All` (any case) or a jurisdiction code.
pub fn parse_scope(s: &str) -> Scope {
    if s.eq_ignore_ascii_case("all") {
        Scope::All
    } else {
        Scope::Economy(s.trim().to_ascii_uppercase())
    }
}

/// `All` followed by every jurisdiction carried by a live company.
pub fn default_scopes(graph: &GraphStore) -> Vec<Scope> {
    let codes: BTreeSet<String> = graph
        .live_entities()
        .filter(|e| e.kind == EntityKind::Company)
        .filter_map(|e| e.jurisdiction.clone())
        .collect();
    std::iter::once(Scope::All)
        .chain(codes.into_iter().map(Scope::Economy))
        .collect()
}

pub fn metrics_row(graph: &GraphStore, scope: Scope, include_unverified: bool, seed: u64) -> MetricsRow {
    let view = graph.subgraph(&metrics_scope(&scope, include_unverified));
    MetricsRow {
        scope: scope.to_string(),
        modularity: detect_communities(&view, seed).ok(),
        stats: compute_stats(&view, scope),
    }
}

pub fn metrics_report(graph: &GraphStore, scopes: &[Scope], include_unverified: bool, seed: u64) -> MetricsReport {
    MetricsReport {
        include_unverified,
        seed,
        rows: scopes
            .iter()
            .map(|s| metrics_row(graph, s.clone(), include_unverified, seed))
            .collect(),
    }
}
