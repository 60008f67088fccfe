use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::UndirectedGraph;
use crate::graph::GraphView;
use crate::model::EntityId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModularityError {
    #[error("modularity needs at least one edge")]
    EmptyGraph,
    #[error("partition does not assign node {0}")]
    IncompletePartition(EntityId),
}

/// Community assignment for every node of a view.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<EntityId, u32>,
    pub community_count: usize,
}

impl Partition {
    /// Relabel communities densely, in order of first appearance by node id.
    pub fn from_assignment(raw: impl IntoIterator<Item = (EntityId, u64)>) -> Self {
        let raw: BTreeMap<EntityId, u64> = raw.into_iter().collect();
        let mut relabel: BTreeMap<u64, u32> = BTreeMap::new();
        let assignment = raw
            .into_iter()
            .map(|(id, c)| {
                let next = relabel.len() as u32;
                (id, *relabel.entry(c).or_insert(next))
            })
            .collect();
        Partition {
            assignment,
            community_count: relabel.len(),
        }
    }

    pub fn single(ids: impl IntoIterator<Item = EntityId>) -> Self {
        Self::from_assignment(ids.into_iter().map(|id| (id, 0)))
    }

    pub fn singletons(ids: impl IntoIterator<Item = EntityId>) -> Self {
        Self::from_assignment(ids.into_iter().map(|id| (id, id.0)))
    }

    pub fn community_of(&self, id: EntityId) -> Option<u32> {
        self.assignment.get(&id).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Louvain,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityResult {
    pub q: f64,
    pub partition: Partition,
    pub algorithm: Algorithm,
}

/// Q over the undirected simple projection of `view`.
pub fn modularity(view: &GraphView, partition: &Partition) -> Result<f64, ModularityError> {
    let g = UndirectedGraph::from_view(view);
    let mut communities = Vec::with_capacity(g.node_count());
    for id in g.ids() {
        let c = partition
            .community_of(*id)
            .ok_or(ModularityError::IncompletePartition(*id))?;
        communities.push(c as usize);
    }
    modularity_of(&g, &communities)
}

/// `Q = sum_c [ L_c / m - (d_c / 2m)^2 ]`, the per-community form of the
/// pairwise sum; `L_c` counts intra-community edges and `d_c` sums degrees.
pub(crate) fn modularity_of(g: &UndirectedGraph, community: &[usize]) -> Result<f64, ModularityError> {
    let m = g.edge_count();
    if m == 0 {
        return Err(ModularityError::EmptyGraph);
    }
    let k = community.iter().copied().max().map_or(0, |c| c + 1);
    let mut inner = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for i in 0..g.node_count() {
        degree[community[i]] += g.degree(i);
    }
    for (i, j) in g.edges() {
        if community[i] == community[j] {
            inner[community[i]] += 1;
        }
    }
    let m = m as f64;
    let q = inner
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| {
            let share = d as f64 / (2.0 * m);
            l as f64 / m - share * share
        })
        .sum();
    Ok(q)
}
