use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::GraphStore;
use crate::model::{Entity, EntityId, EntityKind, RelationKind, RelationStatus};
use crate::normalize::NameNormalizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    /// Normalized canonical names must be equal.
    ExactNormalizedName,
    /// Any normalized alias of one equals any normalized alias of the other.
    AliasAware,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub policy: MatchPolicy,
    pub nodes_a: usize,
    pub nodes_b: usize,
    pub node_overlap: usize,
    pub edges_a: usize,
    pub edges_b: usize,
    pub edge_overlap: usize,
    pub matched: Vec<(EntityId, EntityId)>,
    pub unmatched_a: Vec<String>,
    pub unmatched_b: Vec<String>,
}

fn keys(e: &Entity, policy: MatchPolicy, n: &NameNormalizer) -> BTreeSet<String> {
    match policy {
        MatchPolicy::ExactNormalizedName => [n.key(&e.canonical_name)].into_iter().collect(),
        MatchPolicy::AliasAware => e.aliases.iter().map(|a| n.key(a)).collect(),
    }
}

fn supply_pairs(g: &GraphStore) -> BTreeSet<(EntityId, EntityId)> {
    g.relations()
        .filter(|r| r.kind == RelationKind::Supply && r.status != RelationStatus::Rejected)
        .map(|r| (r.source, r.target))
        .collect()
}

/// Match live companies one-to-one (greedy, in id order) and count supply
/// edges whose matched endpoints agree in direction.
pub fn compare_datasets(
    a: &GraphStore,
    b: &GraphStore,
    policy: MatchPolicy,
    normalizer: &NameNormalizer,
) -> OverlapReport {
    let companies = |g: &GraphStore| -> Vec<Entity> {
        g.live_entities()
            .filter(|e| e.kind == EntityKind::Company)
            .cloned()
            .collect()
    };
    let (ca, cb) = (companies(a), companies(b));
    let mut index: BTreeMap<String, BTreeSet<EntityId>> = BTreeMap::new();
    for e in &cb {
        for k in keys(e, policy, normalizer) {
            index.entry(k).or_default().insert(e.id);
        }
    }
    let mut taken = BTreeSet::new();
    let mut map: BTreeMap<EntityId, EntityId> = BTreeMap::new();
    for e in &ca {
        let candidates: BTreeSet<EntityId> = keys(e, policy, normalizer)
            .iter()
            .filter_map(|k| index.get(k))
            .flatten()
            .copied()
            .filter(|id| !taken.contains(id))
            .collect();
        if let Some(&hit) = candidates.iter().next() {
            taken.insert(hit);
            map.insert(e.id, hit);
        }
    }
    let (ea, eb) = (supply_pairs(a), supply_pairs(b));
    let edge_overlap = ea
        .iter()
        .filter(|(s, t)| match (map.get(s), map.get(t)) {
            (Some(ms), Some(mt)) => eb.contains(&(*ms, *mt)),
            _ => false,
        })
        .count();
    OverlapReport {
        policy,
        nodes_a: ca.len(),
        nodes_b: cb.len(),
        node_overlap: map.len(),
        edges_a: ea.len(),
        edges_b: eb.len(),
        edge_overlap,
        matched: map.iter().map(|(x, y)| (*x, *y)).collect(),
        unmatched_a: ca
            .iter()
            .filter(|e| !map.contains_key(&e.id))
            .map(|e| e.canonical_name.clone())
            .collect(),
        unmatched_b: cb
            .iter()
            .filter(|e| !taken.contains(&e.id))
            .map(|e| e.canonical_name.clone())
            .collect(),
    }
}
