//! Frontier state for the iterative company walk.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{DocumentId, EntityId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_iterations: Option<u32>,
    pub max_documents: Option<u64>,
    pub max_provider_calls: Option<u64>,
    pub wall_clock_ms: Option<u64>,
    /// Hops from the seeds; seeds are depth 0.
    pub max_depth: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_iterations: None,
            max_documents: None,
            max_provider_calls: None,
            wall_clock_ms: None,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Iterations,
    Documents,
    ProviderCalls,
    WallClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "budget")]
pub enum StopReason {
    Fixpoint,
    Budget(BudgetKind),
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::Fixpoint => "fixpoint",
            StopReason::Budget(_) => "budget",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub queries_issued: u64,
    pub search_results: u64,
    pub docs_fetched: u64,
    pub docs_stored: u64,
    pub docs_duplicate: u64,
    pub chunks: u64,
    pub provider_calls: u64,
    pub triplets_extracted: u64,
    pub triplets_accepted: u64,
    pub triplets_rejected: u64,
    pub companies_discovered: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub company: EntityId,
    pub depth: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningState {
    pub frontier: VecDeque<FrontierEntry>,
    pub visited: BTreeSet<EntityId>,
    pub iteration: u32,
    pub budgets: Budgets,
    pub counters: Counters,
    /// URL to the document it produced, so resumed runs skip the fetch.
    pub fetched_urls: BTreeMap<String, Option<DocumentId>>,
    /// Documents whose extraction finished.
    pub processed_documents: BTreeSet<DocumentId>,
}

impl MiningState {
    pub fn new(budgets: Budgets) -> Self {
        MiningState {
            budgets,
            ..Default::default()
        }
    }

    pub fn is_queued(&self, id: EntityId) -> bool {
        self.frontier.iter().any(|e| e.company == id)
    }

    /// Queue a company unless it is visited, queued, or too deep.
    pub fn enqueue(&mut self, company: EntityId, depth: u32) -> bool {
        if depth > self.budgets.max_depth || self.visited.contains(&company) || self.is_queued(company)
        {
            return false;
        }
        self.frontier.push_back(FrontierEntry { company, depth });
        true
    }

    /// The companies queued at the start of the next iteration, capped by `batch`.
    pub fn next_batch(&self, batch: Option<usize>) -> Vec<FrontierEntry> {
        let n = batch.unwrap_or(usize::MAX).min(self.frontier.len());
        self.frontier.iter().take(n).copied().collect()
    }

    /// Move the front company to `visited`. Returns it if it matched.
    pub fn complete(&mut self, company: EntityId) -> bool {
        match self.frontier.front() {
            Some(e) if e.company == company => {
                self.frontier.pop_front();
                self.visited.insert(company);
                true
            }
            _ => false,
        }
    }

    /// Replace a merged company with its survivor, or drop it if the survivor
    /// is already visited or queued.
    pub fn forward(&mut self, absorbed: EntityId, survivor: EntityId) {
        let survivor_known = self.visited.contains(&survivor) || self.is_queued(survivor);
        if self.visited.remove(&absorbed) {
            self.visited.insert(survivor);
            self.frontier.retain(|e| e.company != survivor);
            return;
        }
        if let Some(pos) = self.frontier.iter().position(|e| e.company == absorbed) {
            if survivor_known {
                self.frontier.remove(pos);
            } else {
                self.frontier[pos].company = survivor;
            }
        }
    }

    pub fn exhausted(&self, elapsed_ms: u64) -> Option<BudgetKind> {
        let b = &self.budgets;
        let c = &self.counters;
        if b.max_iterations.is_some_and(|m| self.iteration >= m) {
            return Some(BudgetKind::Iterations);
        }
        if b.max_documents.is_some_and(|m| c.docs_fetched >= m) {
            return Some(BudgetKind::Documents);
        }
        if b.max_provider_calls.is_some_and(|m| c.provider_calls >= m) {
            return Some(BudgetKind::ProviderCalls);
        }
        if b.wall_clock_ms.is_some_and(|m| elapsed_ms >= m) {
            return Some(BudgetKind::WallClock);
        }
        None
    }

    /// `frontier ∩ visited = ∅` and no company queued twice.
    pub fn is_consistent(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.frontier
            .iter()
            .all(|e| !self.visited.contains(&e.company) && seen.insert(e.company))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enqueue_guards() {
        let mut s = MiningState::new(Budgets {
            max_depth: 1,
            ..Default::default()
        });
        assert!(s.enqueue(EntityId(1), 0));
        assert!(!s.enqueue(EntityId(1), 0));
        assert!(!s.enqueue(EntityId(2), 2));
        assert!(s.complete(EntityId(1)));
        assert!(!s.enqueue(EntityId(1), 1));
        assert!(s.is_consistent());
    }

    #[test]
    fn forward_after_merge() {
        let mut s = MiningState::new(Budgets::default());
        s.enqueue(EntityId(1), 0);
        s.enqueue(EntityId(2), 0);
        s.complete(EntityId(1));
        s.forward(EntityId(2), EntityId(1));
        assert!(s.frontier.is_empty());
        s.enqueue(EntityId(3), 1);
        s.forward(EntityId(3), EntityId(4));
        assert_eq!(s.frontier[0].company, EntityId(4));
        s.forward(EntityId(1), EntityId(4));
        assert!(s.visited.contains(&EntityId(4)));
        assert!(s.is_consistent());
    }

    #[test]
    fn budgets_trip_in_order() {
        let mut s = MiningState::new(Budgets {
            max_documents: Some(1),
            ..Default::default()
        });
        assert_eq!(s.exhausted(0), None);
        s.counters.docs_fetched = 1;
        assert_eq!(s.exhausted(0), Some(BudgetKind::Documents));
    }
}
