//! Label influence on symmetric-normalized label propagation.
//!
//! The label influence of `u` on `v` after `K` propagation steps is the sum,
//! over all `K`-step walks from `v` to `u`, of the product of the normalized
//! edge weights `d_a^{-1/2} d_b^{-1/2}` along the walk. The attack objective
//! for a target `v` is the total influence of label-`c` nodes minus that of
//! nodes sharing `v`'s own label.
//!
//! Three degree conventions appear:
//! - exact: every degree read from the (perturbed) graph;
//! - approximate constant: clean degrees except `d_v` shifted by one;
//! - approximate delta: only walks through the toggled edge, with `d_v`
//!   shifted and, for additions, the candidate's degree shifted too.
//!
//! All three are expressed with [`DegreeOverrides`] on one code path.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    enumerate_walks, hop_distances, step_walk_weights, walk_weights_from, ClassId, DegreeOverrides, NodeId,
    Reweighted, SingleFlip, Topology,
};

/// Deepest propagation supported by the walk-based routines.
pub const MAX_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    #[serde(rename = "true")]
    TrueLabels,
    #[serde(rename = "estimated")]
    EstimatedLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Add,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfluenceQuery {
    pub target: NodeId,
    pub target_label: ClassId,
    pub own_label: ClassId,
    pub depth: usize,
    pub label_source: LabelSource,
}

impl InfluenceQuery {
    pub fn new(
        target: NodeId,
        target_label: ClassId,
        own_label: ClassId,
        depth: usize,
        label_source: LabelSource,
    ) -> Result<Self> {
        if target_label == own_label {
            return Err(Error::InvalidArgument(format!(
                "target label {target_label} equals the node's own label"
            )));
        }
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!(
                "depth must be in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        Ok(Self {
            target,
            target_label,
            own_label,
            depth,
            label_source,
        })
    }

    /// Which side of the objective node `u` falls on, if any.
    fn side(&self, labels: &[Option<ClassId>], u: NodeId) -> Result<Side> {
        match labels[u] {
            Some(l) if l == self.target_label => Ok(Side::Target),
            Some(l) if l == self.own_label => Ok(Side::Own),
            Some(_) => Ok(Side::Neither),
            None if self.label_source == LabelSource::TrueLabels => Err(Error::MissingLabel(u)),
            None => Ok(Side::Neither),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Target,
    Own,
    Neither,
}

/// Influence split by label: label-`c` mass and own-label mass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SignedInfluence {
    pub toward_target: f64,
    pub toward_own: f64,
}

impl SignedInfluence {
    pub fn net(&self) -> f64 {
        self.toward_target - self.toward_own
    }
}

impl Add for SignedInfluence {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            toward_target: self.toward_target + rhs.toward_target,
            toward_own: self.toward_own + rhs.toward_own,
        }
    }
}

impl AddAssign for SignedInfluence {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Mul<f64> for SignedInfluence {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self {
            toward_target: self.toward_target * k,
            toward_own: self.toward_own * k,
        }
    }
}

/// Approximate gain of one candidate toggle, split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceBreakdown {
    pub constant: f64,
    pub delta: f64,
    pub candidate: NodeId,
    pub direction: Direction,
}

impl InfluenceBreakdown {
    pub fn gain(&self) -> f64 {
        gain(self)
    }
}

/// `constant + delta` for additions, `constant - delta` for deletions.
pub fn gain(b: &InfluenceBreakdown) -> f64 {
    match b.direction {
        Direction::Add => b.constant + b.delta,
        Direction::Delete => b.constant - b.delta,
    }
}

fn check_node<T: Topology>(g: &T, u: NodeId) -> Result<()> {
    if u < g.num_nodes() {
        Ok(())
    } else {
        Err(Error::NodeOutOfRange {
            node: u,
            num_nodes: g.num_nodes(),
        })
    }
}

fn check_labels<T: Topology>(g: &T, labels: &[Option<ClassId>]) -> Result<()> {
    if labels.len() == g.num_nodes() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.num_nodes()
        )))
    }
}

/// Label influence of `u` on `v`: sum over enumerated walks of the product
/// of normalized edge weights, with degrees read from `g`.
pub fn label_influence_exact<T: Topology>(
    g: &T,
    v: NodeId,
    u: NodeId,
    depth: usize,
) -> Result<f64> {
    if depth > MAX_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth must be <= {MAX_DEPTH}"
        )));
    }
    Ok(enumerate_walks(g, v, u, depth)?.weight_sum(g))
}

/// Objective terms on `g` with every degree taken from `g`, computed by
/// propagating walk weights outward from the target.
pub fn objective_terms_exact<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
) -> Result<SignedInfluence> {
    check_node(g, q.target)?;
    check_labels(g, labels)?;
    let weights = walk_weights_from(g, q.target, q.depth);
    let mut out = SignedInfluence::default();
    for (&u, &w) in &weights {
        match q.side(labels, u)? {
            Side::Target => out.toward_target += w,
            Side::Own => out.toward_own += w,
            Side::Neither => {}
        }
    }
    Ok(out)
}

/// Label-`c` influence minus own-label influence on the target, exact on `g`.
pub fn objective_exact<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
) -> Result<f64> {
    Ok(objective_terms_exact(g, labels, q)?.net())
}

/// Depth-first label-influence accumulator.
///
/// Descends `depth` hops from `start`, multiplying the running weight by
/// `d_p^{-1/2} d_u^{-1/2}` per hop, and at depth zero credits the weight to
/// the label-`c` or own-label total according to the reached node's label.
pub fn label_influence_dfs<T: Topology>(
    g: &T,
    start: NodeId,
    depth: usize,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
) -> Result<SignedInfluence> {
    check_node(g, start)?;
    check_labels(g, labels)?;
    let mut out = SignedInfluence::default();
    let mut stack: Vec<(NodeId, usize, f64)> = vec![(start, depth, 1.0)];
    while let Some((p, k, s)) = stack.pop() {
        if k == 0 {
            match q.side(labels, p)? {
                Side::Target => out.toward_target += s,
                Side::Own => out.toward_own += s,
                Side::Neither => {}
            }
            continue;
        }
        let sp = s / (g.degree(p) as f64).sqrt();
        g.for_each_neighbor(p, |u| {
            stack.push((u, k - 1, sp / (g.degree(u) as f64).sqrt()));
        });
    }
    Ok(out)
}

/// Objective through the depth-first accumulator started at the target.
pub fn objective_dfs<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
) -> Result<f64> {
    Ok(label_influence_dfs(g, q.target, q.depth, labels, q)?.net())
}

/// Objective over the walks of `g_current` with every degree as in
/// `g_current` except the target's, shifted by one in `direction`.
pub fn approx_constant_terms<T: Topology>(
    g_current: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    direction: Direction,
) -> Result<SignedInfluence> {
    check_node(g_current, q.target)?;
    let d = g_current.degree(q.target);
    let shifted = match direction {
        Direction::Add => d + 1,
        Direction::Delete if d <= 1 => {
            return Err(Error::InvalidArgument(format!(
                "target {} has no edge left to delete",
                q.target
            )))
        }
        Direction::Delete => d - 1,
    };
    let view = Reweighted::new(g_current, DegreeOverrides::one(q.target, shifted));
    label_influence_dfs(&view, q.target, q.depth, labels, q)
}

pub fn approx_constant<T: Topology>(
    g_current: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    direction: Direction,
) -> Result<f64> {
    Ok(approx_constant_terms(g_current, labels, q, direction)?.net())
}

/// Signed influence over the walks created (add) or destroyed (delete) by
/// toggling the edge between the target and `candidate`.
///
/// Additions weight edges at the target with `d_v + 1` and at the candidate
/// with `d_a + 1`; deletions weight edges at the target with `d_v - 1` and
/// keep the candidate's degree. All other degrees are read from `g`.
pub fn approx_delta_terms<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    candidate: NodeId,
    direction: Direction,
) -> Result<SignedInfluence> {
    let v = q.target;
    check_node(g, v)?;
    check_node(g, candidate)?;
    check_labels(g, labels)?;
    if candidate == v {
        return Err(Error::InvalidArgument(
            "candidate must differ from the target".into(),
        ));
    }
    let linked = g.has_edge(v, candidate);
    match direction {
        Direction::Add => {
            if linked {
                return Err(Error::InvalidArgument(format!(
                    "candidate {candidate} is already adjacent to {v}"
                )));
            }
            let overrides = DegreeOverrides::one(v, g.degree(v) + 1)
                .with(candidate, g.degree(candidate) + 1);
            let without = Reweighted::new(g, overrides);
            let flipped = SingleFlip::new(g, v, candidate);
            let with = Reweighted::new(&flipped, overrides);
            walks_through_edge(&with, &without, v, candidate, labels, q)
        }
        Direction::Delete => {
            if !linked {
                return Err(Error::InvalidArgument(format!(
                    "candidate {candidate} is not adjacent to {v}"
                )));
            }
            let overrides = DegreeOverrides::one(v, g.degree(v) - 1)
                .with(candidate, g.degree(candidate));
            let with = Reweighted::new(g, overrides);
            let flipped = SingleFlip::new(g, v, candidate);
            let without = Reweighted::new(&flipped, overrides);
            walks_through_edge(&with, &without, v, candidate, labels, q)
        }
    }
}

pub fn approx_delta<T: Topology>(
    g: &T,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    candidate: NodeId,
    direction: Direction,
) -> Result<f64> {
    Ok(approx_delta_terms(g, labels, q, candidate, direction)?.net())
}

/// Sums the walks of `q.depth` steps from `v` on `with` that cross the edge
/// `(v, a)` at least once. Each such walk splits at its first crossing into
/// a prefix that lives in `without`, the crossing itself, and a free suffix
/// on `with`:
///
/// `sum_j sum_{x in {v,a}} P_j(x) * w(v,a) * S_{K-1-j}(other(x))`
fn walks_through_edge<P: Topology, Q: Topology>(
    with: &P,
    without: &Q,
    v: NodeId,
    a: NodeId,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
) -> Result<SignedInfluence> {
    let depth = q.depth;
    let crossing = with.edge_weight(v, a);
    let mut suffix_cache: BTreeMap<(NodeId, usize), SignedInfluence> = BTreeMap::new();
    let mut total = SignedInfluence::default();
    let near_v = hop_distances(without, v, depth - 1);
    let near_a = hop_distances(without, a, depth - 1);
    let mut prefix = BTreeMap::from([(v, 1.0)]);
    for j in 0..depth {
        let rest = depth - 1 - j;
        for (x, y) in [(v, a), (a, v)] {
            let Some(&px) = prefix.get(&x) else { continue };
            if px == 0.0 {
                continue;
            }
            let s = match suffix_cache.get(&(y, rest)) {
                Some(s) => *s,
                None => {
                    let s = label_influence_dfs(with, y, rest, labels, q)?;
                    suffix_cache.insert((y, rest), s);
                    s
                }
            };
            total += s * (px * crossing);
        }
        if j + 1 < depth {
            // Prefix mass that cannot reach `v` or `a` in time is dropped.
            let budget = depth - 2 - j;
            prefix = step_walk_weights(without, &prefix);
            prefix.retain(|u, _| {
                near_v.get(u).is_some_and(|&d| d <= budget)
                    || near_a.get(u).is_some_and(|&d| d <= budget)
            });
        }
    }
    Ok(total)
}
