//! Louvain against exhaustive partition search on small graphs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sckg_core::analytics::{detect_communities, modularity, Partition};
use sckg_core::graph::{GraphView, ViewEdge, ViewNode};
use sckg_core::model::{EntityId, EntityKind, RelationId, RelationKind, RelationStatus};

fn view(n: usize, edges: &[(usize, usize)]) -> GraphView {
    GraphView {
        nodes: (0..n)
            .map(|i| ViewNode {
                id: EntityId(i as u64 + 1),
                kind: EntityKind::Company,
                name: format!("n{i}"),
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
                source: EntityId(s as u64 + 1),
                target: EntityId(t as u64 + 1),
            })
            .collect(),
    }
}

/// Direct pairwise sum over the adjacency matrix, written independently of the library.
fn q_direct(n: usize, edges: &[(usize, usize)], community: &[usize]) -> f64 {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(s, t) in edges {
        if s != t {
            a[s][t] = 1.0;
            a[t][s] = 1.0;
        }
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_r: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if community[i] == community[j] {
                q += a[i][j] - k[i] * k[j] / two_r;
            }
        }
    }
    q / two_r
}

/// Every set partition of `0..n` as a restricted growth string.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut p = vec![0];
    grow(&mut p, 0, n, &mut out);
    out
}

fn brute_force(n: usize, edges: &[(usize, usize)]) -> (f64, Vec<usize>) {
    partitions(n)
        .into_iter()
        .map(|p| (q_direct(n, edges, &p), p))
        .fold((f64::NEG_INFINITY, vec![]), |best, cur| if cur.0 > best.0 { cur } else { best })
}

fn to_partition(p: &[usize]) -> Partition {
    Partition::from_assignment(
        p.iter()
            .enumerate()
            .map(|(i, c)| (EntityId(i as u64 + 1), *c as u64)),
    )
}

fn complete(n: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            e.push((i, j));
        }
    }
    e
}

#[test]
fn bell_numbers() {
    let counts: Vec<usize> = (1..=8).map(|n| partitions(n).len()).collect();
    assert_eq!(counts, [1, 2, 5, 15, 52, 203, 877, 4140]);
}

#[test]
fn fixed_fixtures_meet_the_optimum() {
    let triangles = vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)];
    let mut two_k4 = complete(4);
    two_k4.extend(complete(4).into_iter().map(|(a, b)| (a + 4, b + 4)));
    two_k4.push((3, 4));
    // (name, nodes, edges, known optimum)
    type Fixture = (&'static str, usize, Vec<(usize, usize)>, Option<f64>);
    let fixtures: Vec<Fixture> = vec![
        ("two triangles", 6, triangles, Some(0.5)),
        ("K5", 5, complete(5), Some(0.0)),
        ("two K4 bridged", 8, two_k4, None),
    ];
    for (name, n, edges, expected) in fixtures {
        let (opt, _) = brute_force(n, &edges);
        if let Some(e) = expected {
            assert!((opt - e).abs() < 1e-12, "{name}: brute force {opt}");
        }
        for seed in 0..5 {
            let r = detect_communities(&view(n, &edges), seed).unwrap();
            assert!((r.q - opt).abs() < 1e-9, "{name} seed {seed}: {} vs {opt}", r.q);
        }
    }
}

#[test]
fn random_small_graphs_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut gaps = Vec::new();
    let mut checked = 0;
    while checked < 30 {
        let n = rng.gen_range(3..=8);
        let p: f64 = rng.gen_range(0.2..0.7);
        let edges: Vec<(usize, usize)> = complete(n).into_iter().filter(|_| rng.gen_bool(p)).collect();
        if edges.is_empty() {
            continue;
        }
        checked += 1;
        let (opt, best) = brute_force(n, &edges);
        let v = view(n, &edges);
        assert!((modularity(&v, &to_partition(&best)).unwrap() - opt).abs() < 1e-12);
        let r = detect_communities(&v, checked as u64).unwrap();
        assert!(r.q <= opt + 1e-9, "Louvain beat the optimum");
        if r.q < opt - 1e-9 {
            gaps.push((n, edges.len(), opt - r.q));
        }
    }
    for (n, m, gap) in &gaps {
        eprintln!("louvain gap n={n} m={m}: {gap:.3e}");
    }
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 1..20),
        )
    })
}

proptest! {
    #[test]
    fn library_matches_pairwise_sum((n, edges) in arb_graph(), seed in any::<u64>()) {
        let v = view(n, &edges);
        prop_assume!(edges.iter().any(|(a, b)| a != b));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let community: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let q = modularity(&v, &to_partition(&community)).unwrap();
        prop_assert!((q - q_direct(n, &edges, &community)).abs() < 1e-12);
    }

    #[test]
    fn one_community_is_always_zero((n, edges) in arb_graph()) {
        prop_assume!(edges.iter().any(|(a, b)| a != b));
        let v = view(n, &edges);
        let q = modularity(&v, &to_partition(&vec![0; n])).unwrap();
        prop_assert!(q.abs() < 1e-12);
    }

    #[test]
    fn louvain_is_self_consistent((n, edges) in arb_graph(), seed in any::<u64>()) {
        prop_assume!(edges.iter().any(|(a, b)| a != b));
        let v = view(n, &edges);
        let r = detect_communities(&v, seed).unwrap();
        prop_assert_eq!(r.q, modularity(&v, &r.partition).unwrap());
        prop_assert!((-0.5..=1.0).contains(&r.q));
        prop_assert_eq!(r.partition.assignment.len(), n);
    }
}
