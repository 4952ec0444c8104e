//! Undirected graphs with implicit self-loops.
//!
//! Every node is its own neighbor: `degree(u)` is the number of stored
//! neighbors plus one and `neighbors(u)` always yields `u`. Self-loops are
//! never stored. [`EdgeOverlay`] layers edge flips on top of a [`Graph`],
//! restricted to pairs that touch one target node.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type ClassId = usize;

/// Read access to an undirected graph under the self-loop convention.
pub trait Topology {
    fn num_nodes(&self) -> usize;

    /// Degree including the implicit self-loop, always >= 1.
    fn degree(&self, u: NodeId) -> usize;

    /// Calls `f` once for `u` itself and once per stored neighbor.
    fn for_each_neighbor<F: FnMut(NodeId)>(&self, u: NodeId, f: F);

    /// Whether a non-self edge `(u, w)` is present.
    fn has_edge(&self, u: NodeId, w: NodeId) -> bool;

    fn neighbors(&self, u: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.degree(u));
        self.for_each_neighbor(u, |w| out.push(w));
        out
    }

    /// Normalized weight `d_u^{-1/2} d_w^{-1/2}` of the (possibly self) edge `(u, w)`.
    fn edge_weight(&self, u: NodeId, w: NodeId) -> f64 {
        inv_sqrt(self.degree(u)) * inv_sqrt(self.degree(w))
    }
}

#[inline]
pub(crate) fn inv_sqrt(d: usize) -> f64 {
    1.0 / (d as f64).sqrt()
}

/// Sparse node features, one row of `(dimension, value)` pairs per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseFeatures {
    pub fn new(dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (node, row) in rows.iter().enumerate() {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= dim) {
                return Err(Error::DimensionMismatch(format!(
                    "node {node} has feature index {j} >= dimension {dim}"
                )));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn row(&self, u: NodeId) -> &[(usize, f64)] {
        &self.rows[u]
    }
}

/// Immutable undirected graph in CSR form, with labels and optional features.
#[derive(Debug, Clone)]
pub struct Graph {
    name: String,
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    labels: Vec<Option<ClassId>>,
    num_classes: usize,
    features: Option<SparseFeatures>,
    node_names: Option<Vec<String>>,
    name_index: HashMap<String, NodeId>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate and reversed
    /// pairs collapse into one edge; self-loops are rejected.
    pub fn new(
        num_nodes: usize,
        num_classes: usize,
        edges: &[(NodeId, NodeId)],
        labels: Vec<Option<ClassId>>,
    ) -> Result<Self> {
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((u, c)) = labels
            .iter()
            .enumerate()
            .find_map(|(u, l)| l.filter(|&c| c >= num_classes).map(|c| (u, c)))
        {
            return Err(Error::Data(format!(
                "node {u} has label {c} but there are only {num_classes} classes"
            )));
        }

        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); num_nodes];
        for &(u, w) in edges {
            for x in [u, w] {
                if x >= num_nodes {
                    return Err(Error::NodeOutOfRange { node: x, num_nodes });
                }
            }
            if u == w {
                return Err(Error::Data(format!("self-loop on node {u} must not be stored")));
            }
            adj[u].push(w);
            adj[w].push(u);
        }

        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut targets = Vec::with_capacity(edges.len() * 2);
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            targets.extend(row);
            offsets.push(targets.len());
        }

        Ok(Self {
            name: String::new(),
            offsets,
            targets,
            labels,
            num_classes,
            features: None,
            node_names: None,
            name_index: HashMap::new(),
        })
    }

    pub fn with_features(mut self, features: SparseFeatures) -> Result<Self> {
        if features.rows.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} nodes",
                features.rows.len(),
                self.num_nodes()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} node names for {} nodes",
                names.len(),
                self.num_nodes()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate node name {name:?}")));
            }
        }
        self.name_index = index;
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }

    pub fn label(&self, u: NodeId) -> Option<ClassId> {
        self.labels[u]
    }

    pub fn features(&self) -> Option<&SparseFeatures> {
        self.features.as_ref()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// Stored neighbors of `u`, sorted, without `u` itself.
    pub fn stored_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    /// Undirected edges with `u < w`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.stored_neighbors(u)
                .iter()
                .filter(move |&&w| w > u)
                .map(move |&w| (u, w))
        })
    }

    pub fn check_node(&self, u: NodeId) -> Result<()> {
        if u < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: u,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Looks a node up by its name, falling back to a numeric id.
    pub fn resolve_node(&self, key: &str) -> Result<NodeId> {
        if let Some(&id) = self.name_index.get(key) {
            return Ok(id);
        }
        let id: NodeId = key
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("unknown node {key:?}")))?;
        self.check_node(id)?;
        Ok(id)
    }

    pub fn node_label_str(&self, u: NodeId) -> String {
        match &self.node_names {
            Some(names) => names[u].clone(),
            None => u.to_string(),
        }
    }
}

impl Topology for Graph {
    fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    fn degree(&self, u: NodeId) -> usize {
        self.offsets[u + 1] - self.offsets[u] + 1
    }

    fn for_each_neighbor<F: FnMut(NodeId)>(&self, u: NodeId, mut f: F) {
        f(u);
        for &w in self.stored_neighbors(u) {
            f(w);
        }
    }

    fn has_edge(&self, u: NodeId, w: NodeId) -> bool {
        self.stored_neighbors(u).binary_search(&w).is_ok()
    }
}

/// Edge flips between one target node and other nodes, on top of a base graph.
#[derive(Debug, Clone)]
pub struct EdgeOverlay<'g> {
    base: &'g Graph,
    target: NodeId,
    toggles: BTreeSet<NodeId>,
    target_degree: usize,
}

impl<'g> EdgeOverlay<'g> {
    pub fn new(base: &'g Graph, target: NodeId) -> Result<Self> {
        base.check_node(target)?;
        Ok(Self {
            base,
            target,
            toggles: BTreeSet::new(),
            target_degree: base.degree(target),
        })
    }

    pub fn base(&self) -> &'g Graph {
        self.base
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    /// Flips the connection between the target and `s`. Returns `true` if
    /// the edge is present afterwards.
    pub fn toggle(&mut self, s: NodeId) -> Result<bool> {
        self.base.check_node(s)?;
        if s == self.target {
            return Err(Error::InvalidArgument(
                "cannot toggle the target's self-loop".into(),
            ));
        }
        if !self.toggles.remove(&s) {
            self.toggles.insert(s);
        }
        let present = self.has_edge(self.target, s);
        if present {
            self.target_degree += 1;
        } else {
            self.target_degree -= 1;
        }
        Ok(present)
    }

    pub fn toggles(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.toggles.iter().copied()
    }

    pub fn is_toggled(&self, s: NodeId) -> bool {
        self.toggles.contains(&s)
    }

    /// L1 distance between the overlaid and base target rows.
    pub fn perturbation_size(&self) -> usize {
        self.toggles.len()
    }
}

impl Topology for EdgeOverlay<'_> {
    fn num_nodes(&self) -> usize {
        self.base.num_nodes()
    }

    fn degree(&self, u: NodeId) -> usize {
        if u == self.target {
            self.target_degree
        } else if self.toggles.contains(&u) {
            if self.base.has_edge(self.target, u) {
                self.base.degree(u) - 1
            } else {
                self.base.degree(u) + 1
            }
        } else {
            self.base.degree(u)
        }
    }

    fn for_each_neighbor<F: FnMut(NodeId)>(&self, u: NodeId, mut f: F) {
        if u == self.target {
            f(u);
            for &w in self.base.stored_neighbors(u) {
                if !self.toggles.contains(&w) {
                    f(w);
                }
            }
            for &s in &self.toggles {
                if !self.base.has_edge(u, s) {
                    f(s);
                }
            }
        } else if self.toggles.contains(&u) {
            let was_linked = self.base.has_edge(u, self.target);
            f(u);
            for &w in self.base.stored_neighbors(u) {
                if w != self.target {
                    f(w);
                }
            }
            if !was_linked {
                f(self.target);
            }
        } else {
            self.base.for_each_neighbor(u, f);
        }
    }

    fn has_edge(&self, u: NodeId, w: NodeId) -> bool {
        let flipped = (u == self.target && self.toggles.contains(&w))
            || (w == self.target && self.toggles.contains(&u));
        self.base.has_edge(u, w) != flipped
    }
}

/// Up to two degree substitutions applied on top of a topology.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DegreeOverrides {
    entries: [(NodeId, usize); 2],
    len: usize,
}

impl DegreeOverrides {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn one(u: NodeId, degree: usize) -> Self {
        Self::none().with(u, degree)
    }

    /// Adds or replaces an override. Panics past two distinct nodes.
    pub fn with(mut self, u: NodeId, degree: usize) -> Self {
        assert!(degree >= 1, "degree override must be >= 1");
        if let Some(e) = self.entries[..self.len].iter_mut().find(|e| e.0 == u) {
            e.1 = degree;
            return self;
        }
        assert!(self.len < 2, "at most two degree overrides");
        self.entries[self.len] = (u, degree);
        self.len += 1;
        self
    }

    pub fn get(&self, u: NodeId) -> Option<usize> {
        self.entries[..self.len]
            .iter()
            .find(|e| e.0 == u)
            .map(|e| e.1)
    }
}

/// A topology whose degrees are partially replaced while its edges are kept.
#[derive(Debug, Clone, Copy)]
pub struct Reweighted<'a, T> {
    inner: &'a T,
    overrides: DegreeOverrides,
}

impl<'a, T: Topology> Reweighted<'a, T> {
    pub fn new(inner: &'a T, overrides: DegreeOverrides) -> Self {
        Self { inner, overrides }
    }
}

impl<T: Topology> Topology for Reweighted<'_, T> {
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    fn degree(&self, u: NodeId) -> usize {
        self.overrides
            .get(u)
            .unwrap_or_else(|| self.inner.degree(u))
    }

    fn for_each_neighbor<F: FnMut(NodeId)>(&self, u: NodeId, f: F) {
        self.inner.for_each_neighbor(u, f)
    }

    fn has_edge(&self, u: NodeId, w: NodeId) -> bool {
        self.inner.has_edge(u, w)
    }
}

/// A topology with the single pair `(u, w)` flipped.
#[derive(Debug, Clone, Copy)]
pub struct SingleFlip<'a, T> {
    inner: &'a T,
    u: NodeId,
    w: NodeId,
    present: bool,
}

impl<'a, T: Topology> SingleFlip<'a, T> {
    pub fn new(inner: &'a T, u: NodeId, w: NodeId) -> Self {
        assert_ne!(u, w, "cannot flip a self-loop");
        Self {
            inner,
            u,
            w,
            present: !inner.has_edge(u, w),
        }
    }
}

impl<T: Topology> Topology for SingleFlip<'_, T> {
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    fn degree(&self, x: NodeId) -> usize {
        let d = self.inner.degree(x);
        if x != self.u && x != self.w {
            d
        } else if self.present {
            d + 1
        } else {
            d - 1
        }
    }

    fn for_each_neighbor<F: FnMut(NodeId)>(&self, x: NodeId, mut f: F) {
        let other = if x == self.u {
            self.w
        } else if x == self.w {
            self.u
        } else {
            return self.inner.for_each_neighbor(x, f);
        };
        if self.present {
            self.inner.for_each_neighbor(x, &mut f);
            f(other);
        } else {
            self.inner.for_each_neighbor(x, |y| {
                if y != other {
                    f(y)
                }
            });
        }
    }

    fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        if (a == self.u && b == self.w) || (a == self.w && b == self.u) {
            self.present
        } else {
            self.inner.has_edge(a, b)
        }
    }
}

/// Checked neighbor listing: `u` itself followed by its neighbors.
pub fn neighbors<T: Topology>(g: &T, u: NodeId) -> Result<Vec<NodeId>> {
    check_range(g, u)?;
    Ok(g.neighbors(u))
}

fn check_range<T: Topology>(g: &T, u: NodeId) -> Result<()> {
    if u < g.num_nodes() {
        Ok(())
    } else {
        Err(Error::NodeOutOfRange {
            node: u,
            num_nodes: g.num_nodes(),
        })
    }
}

/// All nodes within `depth` hops of `v`, `v` included.
pub fn k_hop<T: Topology>(g: &T, v: NodeId, depth: usize) -> Result<BTreeSet<NodeId>> {
    check_range(g, v)?;
    Ok(hop_distances(g, v, depth).into_keys().collect())
}

/// BFS hop distances from `v`, truncated at `max_depth`.
pub(crate) fn hop_distances<T: Topology>(
    g: &T,
    v: NodeId,
    max_depth: usize,
) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::new();
    dist.insert(v, 0);
    let mut queue = VecDeque::from([v]);
    while let Some(p) = queue.pop_front() {
        let dp = dist[&p];
        if dp == max_depth {
            continue;
        }
        g.for_each_neighbor(p, |w| {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(dp + 1);
                queue.push_back(w);
            }
        });
    }
    dist
}

/// Every walk of `depth` steps from `from` to `to`, self-loops included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkSet {
    pub from: NodeId,
    pub to: NodeId,
    pub depth: usize,
    /// Node sequences `[from, ..., to]`, each of length `depth + 1`.
    pub walks: Vec<Vec<NodeId>>,
}

impl WalkSet {
    /// Sum over walks of the product of normalized edge weights under `g`.
    pub fn weight_sum<T: Topology>(&self, g: &T) -> f64 {
        self.walks
            .iter()
            .map(|w| w.windows(2).map(|e| g.edge_weight(e[0], e[1])).product::<f64>())
            .sum()
    }
}

pub fn enumerate_walks<T: Topology>(
    g: &T,
    from: NodeId,
    to: NodeId,
    depth: usize,
) -> Result<WalkSet> {
    check_range(g, from)?;
    check_range(g, to)?;
    if depth == 0 {
        return Err(Error::InvalidArgument("walk depth must be >= 1".into()));
    }
    // Distances to `to` prune branches that cannot arrive in time.
    let reach = hop_distances(g, to, depth);
    let mut walks = Vec::new();
    let mut stack: Vec<Vec<NodeId>> = Vec::new();
    if reach.contains_key(&from) {
        stack.push(vec![from]);
    }
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty");
        let remaining = depth + 1 - path.len();
        if remaining == 0 {
            if last == to {
                walks.push(path);
            }
            continue;
        }
        let mut next = g.neighbors(last);
        // Reverse so that popping explores neighbors in listing order.
        next.reverse();
        for w in next {
            if reach.get(&w).is_some_and(|&d| d < remaining) {
                let mut p = path.clone();
                p.push(w);
                stack.push(p);
            }
        }
    }
    Ok(WalkSet {
        from,
        to,
        depth,
        walks,
    })
}

/// Row `v` of `(D^{-1/2}(A+I)D^{-1/2})^depth`, by repeated dense matrix-vector products.
pub fn norm_adj_power_row<T: Topology>(g: &T, v: NodeId, depth: usize) -> Result<Vec<f64>> {
    check_range(g, v)?;
    let n = g.num_nodes();
    let inv: Vec<f64> = (0..n).map(|u| inv_sqrt(g.degree(u))).collect();
    let mut cur = vec![0.0; n];
    cur[v] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..depth {
        for u in 0..n {
            let mut acc = 0.0;
            g.for_each_neighbor(u, |w| acc += inv[w] * cur[w]);
            next[u] = inv[u] * acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Sparse walk weights from `v`: entry `u` is the sum, over all `depth`-step
/// walks from `v` to `u`, of the product of normalized edge weights.
/// Only touches the `depth`-hop ball around `v`.
pub fn walk_weights_from<T: Topology>(g: &T, v: NodeId, depth: usize) -> BTreeMap<NodeId, f64> {
    let mut cur = BTreeMap::from([(v, 1.0)]);
    for _ in 0..depth {
        cur = step_walk_weights(g, &cur);
    }
    cur
}

pub(crate) fn step_walk_weights<T: Topology>(
    g: &T,
    cur: &BTreeMap<NodeId, f64>,
) -> BTreeMap<NodeId, f64> {
    let mut next = BTreeMap::new();
    for (&p, &s) in cur {
        let sp = s * inv_sqrt(g.degree(p));
        g.for_each_neighbor(p, |u| {
            *next.entry(u).or_insert(0.0) += sp * inv_sqrt(g.degree(u));
        });
    }
    next
}
