use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphView, SubgraphFilter};
use crate::model::{EntityId, EntityKind, RelationKind, RelationStatus};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    /// Companies registered in one jurisdiction.
    Economy(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("All"),
            Scope::Economy(code) => f.write_str(code),
        }
    }
}

/// Default metrics filter: companies, supply edges, verified unless widened.
pub fn metrics_scope(scope: &Scope, include_unverified: bool) -> SubgraphFilter {
    let mut filter = SubgraphFilter::default()
        .entity_kinds([EntityKind::Company])
        .relation_kinds([RelationKind::Supply]);
    filter = if include_unverified {
        filter.statuses([RelationStatus::Verified, RelationStatus::Extracted])
    } else {
        filter.statuses([RelationStatus::Verified])
    };
    if let Scope::Economy(code) = scope {
        filter = filter.jurisdictions([code.clone()]);
    }
    filter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub scope: Scope,
    pub nodes: usize,
    /// Edges of the undirected simple projection.
    pub edges: usize,
    /// Distinct ordered `(source, target)` pairs.
    pub directed_edges: usize,
    /// `2R / N`.
    pub average_degree: f64,
    /// `2R / (N (N - 1))`.
    pub density: f64,
    /// `R / (N (N - 1))`, counting directed pairs.
    pub directed_density: f64,
    /// Set when `N < 2` and both densities were defined as 0.
    pub degenerate: bool,
}

impl GraphStats {
    pub fn from_counts(scope: Scope, nodes: usize, edges: usize, directed_edges: usize) -> Self {
        let n = nodes as f64;
        let average_degree = if nodes == 0 {
            0.0
        } else {
            2.0 * edges as f64 / n
        };
        let degenerate = nodes < 2;
        let pairs = n * (n - 1.0);
        let (density, directed_density) = if degenerate {
            (0.0, 0.0)
        } else {
            (2.0 * edges as f64 / pairs, directed_edges as f64 / pairs)
        };
        GraphStats {
            scope,
            nodes,
            edges,
            directed_edges,
            average_degree,
            density,
            directed_density,
            degenerate,
        }
    }
}

pub fn compute_stats(view: &GraphView, scope: Scope) -> GraphStats {
    let g = UndirectedGraph::from_view(view);
    let directed: BTreeSet<(EntityId, EntityId)> = view
        .edges
        .iter()
        .filter(|e| e.source != e.target)
        .map(|e| (e.source, e.target))
        .collect();
    GraphStats::from_counts(scope, g.node_count(), g.edge_count(), directed.len())
}

/// Unweighted undirected simple graph over dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UndirectedGraph {
    ids: Vec<EntityId>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    /// Collapse parallel and reciprocal edges, drop self-loops.
    pub fn from_view(view: &GraphView) -> Self {
        let ids: Vec<EntityId> = view.nodes.iter().map(|n| n.id).collect();
        let index: BTreeMap<EntityId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut adjacency = alloc::vec![BTreeSet::new(); ids.len()];
        for e in &view.edges {
            if let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) {
                if s != t {
                    adjacency[s].insert(t);
                    adjacency[t].insert(s);
                }
            }
        }
        UndirectedGraph { ids, adjacency }
    }

    /// Build from an edge list over nodes `0..n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = alloc::vec![BTreeSet::new(); n];
        for &(s, t) in edges {
            if s != t && s < n && t < n {
                adjacency[s].insert(t);
                adjacency[t].insert(s);
            }
        }
        UndirectedGraph {
            ids: (0..n as u64).map(EntityId).collect(),
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(&j)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::graph::{ViewEdge, ViewNode};
    use crate::model::RelationId;

    fn view(n: u64, edges: &[(u64, u64)]) -> GraphView {
        GraphView {
            nodes: (1..=n)
                .map(|i| ViewNode {
                    id: EntityId(i),
                    kind: EntityKind::Company,
                    name: alloc::format!("n{i}"),
                    jurisdiction: None,
                })
                .collect(),
            edges: edges
                .iter()
                .enumerate()
                .map(|(k, &(s, t))| ViewEdge {
                    id: RelationId(k as u64 + 1),
                    kind: RelationKind::Supply,
                    status: RelationStatus::Verified,
                    source: EntityId(s),
                    target: EntityId(t),
                })
                .collect(),
        }
    }

    #[test]
    fn triangle_is_complete() {
        let s = compute_stats(&view(3, &[(1, 2), (2, 3), (3, 1)]), Scope::All);
        assert_eq!((s.nodes, s.edges), (3, 3));
        assert_eq!(s.density, 1.0);
        assert_eq!(s.average_degree, 2.0);
    }

    #[test]
    fn path_on_four_nodes() {
        let s = compute_stats(&view(4, &[(1, 2), (2, 3), (3, 4)]), Scope::All);
        assert_eq!(s.density, 0.5);
        assert_eq!(s.directed_density, 0.25);
    }

    #[test]
    fn parallel_and_reciprocal_edges_collapse() {
        let s = compute_stats(&view(2, &[(1, 2), (2, 1), (1, 2)]), Scope::All);
        assert_eq!(s.edges, 1);
        assert_eq!(s.directed_edges, 2);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.directed_density, 1.0);
    }

    #[test]
    fn tiny_graphs_are_flagged() {
        let s = compute_stats(&view(1, &[]), Scope::Economy("CN".into()));
        assert!(s.degenerate);
        assert_eq!(s.density, 0.0);
        assert_eq!(s.scope.to_string(), "CN");
        let empty = compute_stats(&GraphView::default(), Scope::All);
        assert_eq!(empty.average_degree, 0.0);
    }
}
