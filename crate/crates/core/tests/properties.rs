mod common;

use std::collections::BTreeSet;

use infattack::attack::{plan_attack, AttackConfig, AttackMode};
use infattack::graph::{
    k_hop, norm_adj_power_row, DegreeOverrides, EdgeOverlay, Graph, NodeId, Reweighted,
    SingleFlip, Topology,
};
use infattack::influence::{
    approx_delta, label_influence_exact, objective_dfs, objective_exact, Direction,
    InfluenceQuery, LabelSource,
};
use infattack::victim::{dense_features, label_propagation, sgc_propagate, softmax_rows};
use ndarray::Array2;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..(3 * n));
        let labels = prop::collection::vec(prop::option::weighted(0.9, 0..3usize), n);
        (Just(n), edges, labels).prop_map(|(n, edges, labels)| {
            let edges: Vec<(NodeId, NodeId)> = edges.into_iter().filter(|(a, b)| a != b).collect();
            Graph::new(n, 3, &edges, labels).unwrap()
        })
    })
}

fn graph_and_node(max_n: usize) -> impl Strategy<Value = (Graph, NodeId, NodeId)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let n = g.num_nodes();
        (Just(g), 0..n, 0..n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn walk_sum_matches_matrix_power((g, v, u) in graph_and_node(14), k in 1usize..=4) {
        let walks = label_influence_exact(&g, v, u, k).unwrap();
        let row = norm_adj_power_row(&g, v, k).unwrap();
        let dense = common::dense_power(&g, k);
        prop_assert!((walks - row[u]).abs() <= 1e-10);
        prop_assert!((walks - dense[v][u]).abs() <= 1e-10);
        prop_assert!(walks >= 0.0);
    }

    #[test]
    fn dfs_matches_exact((g, v, _u) in graph_and_node(20), k in 1usize..=4) {
        let q = InfluenceQuery::new(v, 1, 0, k, LabelSource::EstimatedLabels).unwrap();
        let dfs = objective_dfs(&g, g.labels(), &q).unwrap();
        let exact = objective_exact(&g, g.labels(), &q).unwrap();
        let dense = common::dense_objective(&g, g.labels(), v, 1, 0, k);
        prop_assert!((dfs - exact).abs() <= 1e-10);
        prop_assert!((exact - dense).abs() <= 1e-10);
        let total: f64 = norm_adj_power_row(&g, v, k).unwrap().iter().sum();
        prop_assert!(exact.abs() <= total + 1e-12);
    }

    #[test]
    fn k_hop_is_monotone((g, v, _u) in graph_and_node(20), k in 0usize..4) {
        let small = k_hop(&g, v, k).unwrap();
        let big = k_hop(&g, v, k + 1).unwrap();
        prop_assert!(small.is_subset(&big));
        prop_assert!(small.contains(&v));
    }

    #[test]
    fn toggling_twice_is_identity((g, v, u) in graph_and_node(20)) {
        prop_assume!(u != v);
        let mut ov = EdgeOverlay::new(&g, v).unwrap();
        let before = g.has_edge(v, u);
        prop_assert_eq!(ov.toggle(u).unwrap(), !before);
        prop_assert_eq!(ov.has_edge(v, u), !before);
        prop_assert_eq!(ov.has_edge(u, v), !before);
        ov.toggle(u).unwrap();
        prop_assert_eq!(ov.perturbation_size(), 0);
        for w in 0..g.num_nodes() {
            prop_assert_eq!(ov.degree(w), g.degree(w));
            let mut a = ov.neighbors(w);
            let mut b = g.neighbors(w);
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn overlay_degrees_are_consistent(
        (g, v, _u) in graph_and_node(20),
        flips in prop::collection::vec(0usize..20, 0..6),
    ) {
        let mut ov = EdgeOverlay::new(&g, v).unwrap();
        for f in flips {
            let f = f % g.num_nodes();
            if f != v {
                ov.toggle(f).unwrap();
            }
        }
        for w in 0..g.num_nodes() {
            let nb = ov.neighbors(w);
            prop_assert_eq!(nb.len(), ov.degree(w));
            prop_assert_eq!(nb[0], w);
            let distinct: BTreeSet<NodeId> = nb.iter().copied().collect();
            prop_assert_eq!(distinct.len(), nb.len());
            for &x in &nb[1..] {
                prop_assert!(ov.has_edge(x, w));
            }
        }
        let mat = common::materialize(&ov, 3, g.labels().to_vec());
        let dense_ov = common::dense_power(&ov, 2);
        let dense_mat = common::dense_power(&mat, 2);
        prop_assert_eq!(dense_ov, dense_mat);
    }

    #[test]
    fn delta_counts_exactly_the_walks_through_the_edge((g, v, a) in graph_and_node(16), k in 1usize..=3) {
        prop_assume!(a != v);
        let q = InfluenceQuery::new(v, 1, 0, k, LabelSource::EstimatedLabels).unwrap();
        let flipped = SingleFlip::new(&g, v, a);
        if g.has_edge(v, a) {
            prop_assume!(g.degree(v) > 1);
            let ov = DegreeOverrides::one(v, g.degree(v) - 1).with(a, g.degree(a));
            let with = objective_exact(&Reweighted::new(&g, ov), g.labels(), &q).unwrap();
            let without = objective_exact(&Reweighted::new(&flipped, ov), g.labels(), &q).unwrap();
            let d = approx_delta(&g, g.labels(), &q, a, Direction::Delete).unwrap();
            prop_assert!((d - (with - without)).abs() <= 1e-10);
        } else {
            let ov = DegreeOverrides::one(v, g.degree(v) + 1).with(a, g.degree(a) + 1);
            let with = objective_exact(&Reweighted::new(&flipped, ov), g.labels(), &q).unwrap();
            let without = objective_exact(&Reweighted::new(&g, ov), g.labels(), &q).unwrap();
            let d = approx_delta(&g, g.labels(), &q, a, Direction::Add).unwrap();
            prop_assert!((d - (with - without)).abs() <= 1e-10);
        }
    }

    #[test]
    fn propagation_is_linear(
        g in graph_strategy(16),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in any::<u64>(),
        k in 0usize..4,
    ) {
        let n = g.num_nodes();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((seed as usize + 7 * i + 13 * j) % 17) as f64 - 8.0);
        let y = Array2::from_shape_fn((n, 3), |(i, j)| ((seed as usize + 5 * i + 3 * j) % 11) as f64 - 5.0);
        let lhs = sgc_propagate(&g, (&x * a + &y * b).view(), k).unwrap();
        let rhs = sgc_propagate(&g, x.view(), k).unwrap() * a + sgc_propagate(&g, y.view(), k).unwrap() * b;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let cols = 4;
        let rows = vals.len().div_ceil(cols);
        let mut padded = vals.clone();
        padded.resize(rows * cols, 0.0);
        let p = softmax_rows(Array2::from_shape_vec((rows, cols), padded).unwrap());
        for r in p.rows() {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(r.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn lp_scores_are_bounded(g in graph_strategy(16), k in 0usize..4) {
        prop_assume!(g.labels().iter().any(Option::is_some));
        let lp = label_propagation(&g, g.labels(), 3, k).unwrap();
        for v in 0..g.num_nodes() {
            let total: f64 = norm_adj_power_row(&g, v, k).unwrap().iter().sum();
            for &s in lp.scores.row(v) {
                prop_assert!(s >= 0.0);
                prop_assert!(s <= total + 1e-12);
            }
        }
    }

    #[test]
    fn plans_respect_budget_and_direct_constraint(
        (g, v, _u) in graph_and_node(20),
        budget in 1usize..6,
        exact in any::<bool>(),
    ) {
        prop_assume!(g.label(v).is_some());
        let own = g.label(v).unwrap();
        let c = (own + 1) % 3;
        let q = InfluenceQuery::new(v, c, own, 2, LabelSource::EstimatedLabels).unwrap();
        let cfg = AttackConfig {
            budget,
            mode: if exact { AttackMode::Exact } else { AttackMode::Approx },
            early_stop: false,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&g, g.labels(), &q, &cfg, |ov| -1.0 + 0.01 * ov.perturbation_size() as f64).unwrap();
        prop_assert!(plan.edges_used <= budget);
        prop_assert_eq!(plan.objective_trace.len(), plan.edges_used);
        let nodes: BTreeSet<NodeId> = plan.toggles.iter().map(|t| t.node).collect();
        prop_assert_eq!(nodes.len(), plan.toggles.len());
        for t in &plan.toggles {
            prop_assert!(t.node != v);
            match t.direction {
                Direction::Add => prop_assert!(!g.has_edge(v, t.node) && g.label(t.node) == Some(c)),
                Direction::Delete => prop_assert!(g.has_edge(v, t.node) && g.label(t.node) == Some(own)),
            }
        }
    }
}

#[test]
fn identity_features_reproduce_power_rows() {
    for seed in 0..10 {
        let g = common::random_graph(seed, 20, 2);
        let h = sgc_propagate(&g, dense_features(&g).view(), 3).unwrap();
        let dense = common::dense_power(&g, 3);
        for v in 0..g.num_nodes() {
            for u in 0..g.num_nodes() {
                assert!((h[[v, u]] - dense[v][u]).abs() < 1e-12);
            }
        }
    }
}
