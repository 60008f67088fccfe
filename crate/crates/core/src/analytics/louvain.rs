use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::modularity::{modularity, Algorithm, ModularityError, ModularityResult, Partition};
use super::stats::UndirectedGraph;
use crate::graph::GraphView;

// gains closer than this are treated as equal
const EPS: f64 = 1e-12;
const MAX_PASSES: usize = 10_000;

/// Weighted graph for one aggregation level.
struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_graph(g: &UndirectedGraph) -> Self {
        let n = g.node_count();
        let adjacency: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| g.neighbors(i).map(|j| (j, 1.0)).collect())
            .collect();
        let strength = (0..n).map(|i| g.degree(i) as f64).collect();
        Level {
            adjacency,
            self_weight: alloc::vec![0.0; n],
            strength,
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    /// Move nodes between communities until no move improves Q.
    /// Returns the community of each node and whether anything moved.
    fn local_moving(&self, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut total: Vec<f64> = self.strength.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut any = false;
        for _ in 0..MAX_PASSES {
            let mut moved = false;
            for &i in &order {
                let home = community[i];
                let k = self.strength[i];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                links.insert(home, 0.0);
                for &(j, w) in &self.adjacency[i] {
                    *links.entry(community[j]).or_insert(0.0) += w;
                }
                total[home] -= k;
                let gain = |c: usize, w: f64| w - total[c] * k / two_m;
                let stay = gain(home, links[&home]);

                let mut best = home;
                let mut best_gain = f64::NEG_INFINITY;
                for (&c, &w) in &links {
                    if c == home {
                        continue;
                    }
                    let g = gain(c, w);
                    if g > best_gain + EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                if best == home || best_gain <= stay + EPS {
                    best = home;
                }
                total[best] += k;
                if best != home {
                    community[i] = best;
                    moved = true;
                    any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (community, any)
    }

    /// Collapse communities into nodes, numbered by ascending community id.
    fn aggregate(&self, community: &[usize]) -> (Level, Vec<usize>) {
        let used: BTreeSet<usize> = community.iter().copied().collect();
        let renumber: BTreeMap<usize, usize> =
            used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let k = renumber.len();
        let node_to: Vec<usize> = community.iter().map(|c| renumber[c]).collect();

        let mut self_weight = alloc::vec![0.0; k];
        let mut strength = alloc::vec![0.0; k];
        let mut links: Vec<BTreeMap<usize, f64>> = alloc::vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let ci = node_to[i];
            self_weight[ci] += self.self_weight[i];
            strength[ci] += self.strength[i];
            for &(j, w) in &self.adjacency[i] {
                let cj = node_to[j];
                if ci == cj {
                    // each intra edge is seen from both ends
                    self_weight[ci] += w / 2.0;
                } else {
                    *links[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adjacency = links.into_iter().map(|m| m.into_iter().collect()).collect();
        (
            Level {
                adjacency,
                self_weight,
                strength,
            },
            node_to,
        )
    }
}

/// Louvain community detection with a seeded node order.
///
/// The returned `q` is recomputed from the final partition.
pub fn detect_communities(view: &GraphView, seed: u64) -> Result<ModularityResult, ModularityError> {
    let g = UndirectedGraph::from_view(view);
    let m = g.edge_count();
    if m == 0 {
        return Err(ModularityError::EmptyGraph);
    }
    let two_m = 2.0 * m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(&g);
    // position of each original node in the current level
    let mut membership: Vec<usize> = (0..g.node_count()).collect();
    loop {
        let (community, moved) = level.local_moving(two_m, &mut rng);
        if !moved {
            break;
        }
        let (next, node_to) = level.aggregate(&community);
        for slot in membership.iter_mut() {
            *slot = node_to[*slot];
        }
        if next.len() == level.len() {
            break;
        }
        level = next;
    }
    let partition = Partition::from_assignment(
        g.ids()
            .iter()
            .zip(&membership)
            .map(|(id, c)| (*id, *c as u64)),
    );
    let q = modularity(view, &partition)?;
    Ok(ModularityResult {
        q,
        partition,
        algorithm: Algorithm::Louvain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ViewEdge, ViewNode};
    use crate::model::{EntityId, EntityKind, RelationId, RelationKind, RelationStatus};

    pub(crate) fn view(n: u64, edges: &[(u64, u64)]) -> GraphView {
        GraphView {
            nodes: (0..n)
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
                    id: RelationId(k as u64),
                    kind: RelationKind::Supply,
                    status: RelationStatus::Verified,
                    source: EntityId(s),
                    target: EntityId(t),
                })
                .collect(),
        }
    }

    #[test]
    fn two_triangles() {
        let v = view(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        for seed in 0..10 {
            let r = detect_communities(&v, seed).unwrap();
            assert!((r.q - 0.5).abs() < 1e-12);
            assert_eq!(r.partition.community_count, 2);
        }
    }

    #[test]
    fn complete_graph_stays_together() {
        let mut e = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                e.push((i, j));
            }
        }
        let r = detect_communities(&view(5, &e), 7).unwrap();
        assert!(r.q.abs() < 1e-12);
        assert_eq!(r.partition.community_count, 1);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let v = view(
            8,
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (4, 6), (4, 7), (5, 6), (5, 7), (6, 7)],
        );
        let a = detect_communities(&v, 3).unwrap();
        let b = detect_communities(&v, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.partition.community_count, 2);
    }

    #[test]
    fn edgeless_view_is_an_error() {
        assert_eq!(
            detect_communities(&view(3, &[]), 0),
            Err(ModularityError::EmptyGraph)
        );
    }
}
