#![allow(dead_code)]

use infattack::graph::{ClassId, Graph, NodeId, SparseFeatures, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi graph with `n` in `2..=max_n`, fully labeled over `classes`.
pub fn random_graph(seed: u64, max_n: usize, classes: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_n);
    let p = rng.gen_range(0.05..0.35);
    let mut edges = Vec::new();
    for u in 0..n {
        for w in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, w));
            }
        }
    }
    let labels = (0..n).map(|_| Some(rng.gen_range(0..classes))).collect();
    Graph::new(n, classes, &edges, labels).unwrap()
}

pub fn with_random_features(g: Graph, seed: u64, dim: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let rows = (0..g.num_nodes())
        .map(|_| (0..dim).map(|j| (j, rng.gen_range(-1.0..1.0))).collect())
        .collect();
    g.with_features(SparseFeatures::new(dim, rows).unwrap()).unwrap()
}

/// Dense `D^{-1/2}(A+I)D^{-1/2}` built straight from adjacency queries.
pub fn dense_norm_adj<T: Topology>(g: &T) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if i == j || g.has_edge(i, j) {
                *x = 1.0;
            }
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, bk) in b.iter().enumerate() {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..m {
                    out[i][j] += aik * bk[j];
                }
            }
        }
    }
    out
}

/// `Â^K` by repeated dense multiplication.
pub fn dense_power<T: Topology>(g: &T, k: usize) -> Vec<Vec<f64>> {
    let a = dense_norm_adj(g);
    let n = a.len();
    let mut p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _ in 0..k {
        p = mat_mul(&p, &a);
    }
    p
}

/// Objective from the dense power: label-`c` row mass minus own-label mass.
pub fn dense_objective<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    v: NodeId,
    c: ClassId,
    own: ClassId,
    k: usize,
) -> f64 {
    let row = &dense_power(g, k)[v];
    row.iter()
        .zip(labels)
        .map(|(w, l)| match *l {
            Some(l) if l == c => *w,
            Some(l) if l == own => -*w,
            _ => 0.0,
        })
        .sum()
}

/// Copies an arbitrary topology into a plain graph with the given labels.
pub fn materialize<T: Topology>(g: &T, classes: usize, labels: Vec<Option<ClassId>>) -> Graph {
    let n = g.num_nodes();
    let mut edges = Vec::new();
    for u in 0..n {
        for w in (u + 1)..n {
            if g.has_edge(u, w) {
                edges.push((u, w));
            }
        }
    }
    Graph::new(n, classes, &edges, labels).unwrap()
}
