//! Greedy budgeted direct attack on a single target node.
//!
//! Each step toggles one edge `(v, u)`: adding an edge to a label-`c` node
//! or removing an edge to a node sharing `v`'s label. Candidates are ranked
//! by label-influence gain; success is judged by the victim's margin.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::pick_target_label;
use crate::error::{Error, Result};
use crate::graph::{ClassId, EdgeOverlay, Graph, NodeId, SingleFlip, Topology};
use crate::influence::{
    approx_constant, approx_delta, objective_exact, Direction, InfluenceBreakdown, InfluenceQuery,
    LabelSource,
};
use crate::victim::{NodeClassifier, Victim};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateSets {
    /// Label-`c` nodes not adjacent to the target.
    pub add_candidates: BTreeSet<NodeId>,
    /// Own-label neighbours of the target.
    pub delete_candidates: BTreeSet<NodeId>,
}

impl CandidateSets {
    pub fn is_empty(&self) -> bool {
        self.add_candidates.is_empty() && self.delete_candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.add_candidates.len() + self.delete_candidates.len()
    }
}

/// Builds both candidate sets from `labels`. With `cap`, only the `cap`
/// lowest-degree addition candidates are kept (ties by id).
pub fn build_candidates(
    g: &Graph,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    cap: Option<usize>,
) -> Result<CandidateSets> {
    let v = q.target;
    g.check_node(v)?;
    if labels.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.num_nodes()
        )));
    }
    if q.label_source == LabelSource::TrueLabels && labels[v].is_none() {
        return Err(Error::MissingLabel(v));
    }
    let adjacent: BTreeSet<NodeId> = g.stored_neighbors(v).iter().copied().collect();
    let mut add: Vec<NodeId> = (0..g.num_nodes())
        .filter(|&u| u != v && !adjacent.contains(&u) && labels[u] == Some(q.target_label))
        .collect();
    if let Some(cap) = cap {
        add.sort_by_key(|&u| (g.degree(u), u));
        add.truncate(cap);
    }
    let delete = adjacent
        .into_iter()
        .filter(|&u| labels[u] == Some(q.own_label))
        .collect();
    Ok(CandidateSets {
        add_candidates: add.into_iter().collect(),
        delete_candidates: delete,
    })
}

/// Per-node labels the attacker uses: stored labels, or the victim's
/// predictions for every node.
pub fn resolve_labels<M: NodeClassifier + ?Sized>(
    g: &Graph,
    victim: Option<&M>,
    source: LabelSource,
) -> Result<Vec<Option<ClassId>>> {
    match source {
        LabelSource::TrueLabels => Ok(g.labels().to_vec()),
        LabelSource::EstimatedLabels => {
            let m = victim.ok_or(Error::Untrained)?;
            let pred = m.predict_all();
            if pred.len() != g.num_nodes() {
                return Err(Error::DimensionMismatch(format!(
                    "victim predicts {} nodes, graph has {}",
                    pred.len(),
                    g.num_nodes()
                )));
            }
            Ok(pred.into_iter().map(Some).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    Approx,
    Exact,
}

impl AttackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::Approx => "approx",
            AttackMode::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub budget: usize,
    pub mode: AttackMode,
    /// Stop as soon as the victim margin turns positive.
    pub early_stop: bool,
    /// Stop instead of applying a toggle whose gain is not positive.
    pub require_positive_gain: bool,
    pub candidate_cap: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            budget: 1,
            mode: AttackMode::Approx,
            early_stop: true,
            require_positive_gain: false,
            candidate_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggle {
    pub node: NodeId,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub node: NodeId,
    pub direction: Direction,
    /// Gain the candidate was selected with.
    pub gain: f64,
    /// Approximate decomposition of `gain`; absent in exact mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<InfluenceBreakdown>,
    /// Victim margin after applying the toggle.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub target: NodeId,
    pub target_label: ClassId,
    pub own_label: ClassId,
    pub depth: usize,
    pub mode: AttackMode,
    pub label_source: LabelSource,
    pub budget: usize,
    pub initial_margin: f64,
    pub toggles: Vec<Toggle>,
    pub objective_trace: Vec<TraceStep>,
    pub notes: Vec<String>,
    pub success: bool,
    pub edges_used: usize,
    pub final_margin: f64,
    pub wall_time_ms: f64,
}

/// Outcome of the first `budget` toggles of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixOutcome {
    pub success: bool,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub margin: f64,
}

impl AttackPlan {
    /// Reads the plan as if it had been run with a smaller budget. Valid
    /// because the greedy loop never revisits earlier choices.
    pub fn prefix(&self, budget: usize) -> PrefixOutcome {
        let steps = &self.objective_trace[..budget.min(self.objective_trace.len())];
        let margin = steps.last().map_or(self.initial_margin, |s| s.margin);
        let added = steps.iter().filter(|s| s.direction == Direction::Add).count();
        PrefixOutcome {
            success: margin > 0.0,
            edges_added: added,
            edges_removed: steps.len() - added,
            margin,
        }
    }

    pub fn edges_added(&self) -> usize {
        self.prefix(self.edges_used).edges_added
    }
}

fn deletion_isolates_target<T: Topology>(g: &T, v: NodeId) -> bool {
    g.degree(v) <= 2
}

/// Greedy attack loop. `margin` evaluates the victim on the current
/// overlay; it is called once up front and once per applied toggle.
pub fn plan_attack<M>(
    g: &Graph,
    labels: &[Option<ClassId>],
    q: &InfluenceQuery,
    cfg: &AttackConfig,
    mut margin: M,
) -> Result<AttackPlan>
where
    M: FnMut(&EdgeOverlay<'_>) -> f64,
{
    if cfg.budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let started = Instant::now();
    let v = q.target;
    let candidates = build_candidates(g, labels, q, cfg.candidate_cap)?;
    let mut overlay = EdgeOverlay::new(g, v)?;
    let initial_margin = margin(&overlay);
    let mut plan = AttackPlan {
        target: v,
        target_label: q.target_label,
        own_label: q.own_label,
        depth: q.depth,
        mode: cfg.mode,
        label_source: q.label_source,
        budget: cfg.budget,
        initial_margin,
        toggles: Vec::new(),
        objective_trace: Vec::new(),
        notes: Vec::new(),
        success: initial_margin > 0.0,
        edges_used: 0,
        final_margin: initial_margin,
        wall_time_ms: 0.0,
    };
    if candidates.is_empty() {
        plan.notes.push("no candidates".into());
        plan.success = false;
        plan.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        return Ok(plan);
    }

    // Deltas are taken once on the clean graph.
    let mut pool: Vec<(NodeId, Direction, f64)> = Vec::with_capacity(candidates.len());
    for &a in &candidates.add_candidates {
        let d = match cfg.mode {
            AttackMode::Approx => approx_delta(g, labels, q, a, Direction::Add)?,
            AttackMode::Exact => 0.0,
        };
        pool.push((a, Direction::Add, d));
    }
    for &b in &candidates.delete_candidates {
        let d = match cfg.mode {
            AttackMode::Approx => approx_delta(g, labels, q, b, Direction::Delete)?,
            AttackMode::Exact => 0.0,
        };
        pool.push((b, Direction::Delete, d));
    }
    pool.sort_by_key(|&(u, _, _)| u);
    let mut used = vec![false; pool.len()];
    let mut noted_isolation = false;

    while plan.edges_used < cfg.budget {
        if cfg.early_stop && plan.final_margin > 0.0 {
            break;
        }
        let can_delete = !deletion_isolates_target(&overlay, v);
        if !can_delete && !noted_isolation && pool.iter().zip(&used).any(|(c, &u)| !u && c.1 == Direction::Delete) {
            plan.notes.push(format!(
                "step {}: deletions skipped, target would be isolated",
                plan.edges_used + 1
            ));
            noted_isolation = true;
        }
        let has = |dir: Direction| pool.iter().zip(&used).any(|(c, &u)| !u && c.1 == dir);
        let (c_add, c_del) = match cfg.mode {
            AttackMode::Approx => (
                if has(Direction::Add) {
                    approx_constant(&overlay, labels, q, Direction::Add)?
                } else {
                    0.0
                },
                if can_delete && has(Direction::Delete) {
                    approx_constant(&overlay, labels, q, Direction::Delete)?
                } else {
                    0.0
                },
            ),
            AttackMode::Exact => (0.0, 0.0),
        };

        let mut best: Option<(usize, f64, Option<InfluenceBreakdown>)> = None;
        for (i, &(u, dir, delta)) in pool.iter().enumerate() {
            if used[i] || (dir == Direction::Delete && !can_delete) {
                continue;
            }
            let (gain, breakdown) = match cfg.mode {
                AttackMode::Approx => {
                    let b = InfluenceBreakdown {
                        constant: if dir == Direction::Add { c_add } else { c_del },
                        delta,
                        candidate: u,
                        direction: dir,
                    };
                    (b.gain(), Some(b))
                }
                AttackMode::Exact => {
                    let flipped = SingleFlip::new(&overlay, v, u);
                    (objective_exact(&flipped, labels, q)?, None)
                }
            };
            if best.as_ref().is_none_or(|&(_, g, _)| gain > g) {
                best = Some((i, gain, breakdown));
            }
        }
        let Some((i, gain, breakdown)) = best else {
            plan.notes.push("candidates exhausted".into());
            break;
        };
        if cfg.require_positive_gain && gain <= 0.0 {
            plan.notes.push(format!("stopped: best gain {gain:.6} is not positive"));
            break;
        }
        let (u, dir, _) = pool[i];
        used[i] = true;
        overlay.toggle(u)?;
        let m = margin(&overlay);
        plan.toggles.push(Toggle { node: u, direction: dir });
        plan.objective_trace.push(TraceStep {
            node: u,
            direction: dir,
            gain,
            breakdown,
            margin: m,
        });
        plan.edges_used += 1;
        plan.final_margin = m;
    }
    plan.success = plan.final_margin > 0.0;
    plan.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(plan)
}

/// Picks `c` and `y_v` from the victim, resolves attacker labels, and plans
/// against the victim's margin.
pub fn plan_against_victim(
    g: &Graph,
    victim: &Victim,
    target: NodeId,
    depth: usize,
    source: LabelSource,
    cfg: &AttackConfig,
) -> Result<AttackPlan> {
    g.check_node(target)?;
    let probs = victim.clean_probabilities();
    let row: Vec<f64> = probs.row(target).to_vec();
    let own = match source {
        LabelSource::TrueLabels => g.label(target).ok_or(Error::MissingLabel(target))?,
        LabelSource::EstimatedLabels => crate::victim::argmax(probs.row(target)),
    };
    let c = pick_target_label(&row, own)?;
    let labels = resolve_labels(g, Some(victim), source)?;
    plan_with_labels(g, victim, &labels, target, c, own, depth, source, cfg)
}

/// As [`plan_against_victim`] with labels and classes already resolved.
#[allow(clippy::too_many_arguments)]
pub fn plan_with_labels(
    g: &Graph,
    victim: &Victim,
    labels: &[Option<ClassId>],
    target: NodeId,
    target_label: ClassId,
    own_label: ClassId,
    depth: usize,
    source: LabelSource,
    cfg: &AttackConfig,
) -> Result<AttackPlan> {
    let q = InfluenceQuery::new(target, target_label, own_label, depth, source)?;
    plan_attack(g, labels, &q, cfg, |ov| {
        victim.margin(ov, target, target_label, own_label)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;
    use crate::graph::Graph;

    fn toy_query() -> InfluenceQuery {
        InfluenceQuery::new(toy::V, toy::C, toy::Y_V, 2, LabelSource::TrueLabels).unwrap()
    }

    #[test]
    fn toy_candidate_sets() {
        let g = toy::graph();
        let c = build_candidates(&g, g.labels(), &toy_query(), None).unwrap();
        assert_eq!(c.add_candidates, BTreeSet::from([toy::U6, toy::U7, toy::U8]));
        assert_eq!(c.delete_candidates, BTreeSet::from([toy::U2, toy::U3]));
        let capped = build_candidates(&g, g.labels(), &toy_query(), Some(2)).unwrap();
        assert_eq!(capped.add_candidates, BTreeSet::from([toy::U6, toy::U8]));
    }

    #[test]
    fn empty_candidate_sets() {
        // Every label-1 node already neighbours 0, and 0 has no own-label neighbour.
        let g = Graph::new(3, 2, &[(0, 1), (0, 2)], vec![Some(0), Some(1), Some(1)]).unwrap();
        let q = InfluenceQuery::new(0, 1, 0, 2, LabelSource::TrueLabels).unwrap();
        let c = build_candidates(&g, g.labels(), &q, None).unwrap();
        assert!(c.is_empty());
        let plan = plan_attack(&g, g.labels(), &q, &AttackConfig::default(), |_| -1.0).unwrap();
        assert!(!plan.success);
        assert_eq!(plan.edges_used, 0);
    }

    #[test]
    fn unlabeled_target_in_true_mode() {
        let g = Graph::new(2, 2, &[(0, 1)], vec![None, Some(1)]).unwrap();
        let q = InfluenceQuery::new(0, 1, 0, 2, LabelSource::TrueLabels).unwrap();
        assert!(matches!(
            build_candidates(&g, g.labels(), &q, None),
            Err(Error::MissingLabel(0))
        ));
    }

    #[test]
    fn zero_budget_rejected() {
        let g = toy::graph();
        let cfg = AttackConfig {
            budget: 0,
            ..AttackConfig::default()
        };
        assert!(plan_attack(&g, g.labels(), &toy_query(), &cfg, |_| -1.0).is_err());
    }

    #[test]
    fn approx_first_pick_is_best_gain() {
        let g = toy::graph();
        let cfg = AttackConfig {
            budget: 1,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&g, g.labels(), &toy_query(), &cfg, |_| -1.0).unwrap();
        let step = &plan.objective_trace[0];
        let mut gains = Vec::new();
        for u in [toy::U6, toy::U7, toy::U8] {
            gains.push((u, approx_constant(&g, g.labels(), &toy_query(), Direction::Add).unwrap()
                + approx_delta(&g, g.labels(), &toy_query(), u, Direction::Add).unwrap()));
        }
        for u in [toy::U2, toy::U3] {
            gains.push((u, approx_constant(&g, g.labels(), &toy_query(), Direction::Delete).unwrap()
                - approx_delta(&g, g.labels(), &toy_query(), u, Direction::Delete).unwrap()));
        }
        let max = gains.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert!((step.gain - max).abs() < 1e-12);
        assert_eq!(plan.edges_used, 1);
        assert!(!plan.success);
    }

    #[test]
    fn budget_and_bookkeeping() {
        let g = toy::graph();
        let cfg = AttackConfig {
            budget: 10,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&g, g.labels(), &toy_query(), &cfg, |_| -1.0).unwrap();
        // Five candidates; one deletion must stay to keep v connected only if
        // v would otherwise be isolated.
        assert!(plan.edges_used <= 5);
        assert_eq!(plan.objective_trace.len(), plan.edges_used);
        assert_eq!(plan.toggles.len(), plan.edges_used);
        let nodes: BTreeSet<NodeId> = plan.toggles.iter().map(|t| t.node).collect();
        assert_eq!(nodes.len(), plan.toggles.len());
    }

    #[test]
    fn early_stop_and_full_budget() {
        let g = toy::graph();
        let mut calls = 0;
        let cfg = AttackConfig {
            budget: 4,
            ..AttackConfig::default()
        };
        // Margin turns positive after the second toggle.
        let plan = plan_attack(&g, g.labels(), &toy_query(), &cfg, |ov| {
            calls += 1;
            ov.perturbation_size() as f64 - 1.5
        })
        .unwrap();
        assert_eq!(plan.edges_used, 2);
        assert!(plan.success);
        assert_eq!(calls, 3);
        let full = AttackConfig {
            early_stop: false,
            ..cfg
        };
        let plan = plan_attack(&g, g.labels(), &toy_query(), &full, |ov| {
            ov.perturbation_size() as f64 - 1.5
        })
        .unwrap();
        assert_eq!(plan.edges_used, 4);
        assert!(!plan.prefix(1).success);
        assert!(plan.prefix(2).success);
    }

    #[test]
    fn require_positive_gain_stops() {
        let g = toy::graph();
        let cfg = AttackConfig {
            budget: 3,
            require_positive_gain: true,
            ..AttackConfig::default()
        };
        // Every toy gain is negative at step one.
        let plan = plan_attack(&g, g.labels(), &toy_query(), &cfg, |_| -1.0).unwrap();
        assert_eq!(plan.edges_used, 0);
        assert_eq!(plan.notes.len(), 1);
    }

    #[test]
    fn never_isolates_target() {
        // 0 has one own-label neighbour and nothing to add.
        let g = Graph::new(3, 2, &[(0, 1), (1, 2)], vec![Some(0), Some(0), Some(0)]).unwrap();
        let q = InfluenceQuery::new(0, 1, 0, 2, LabelSource::TrueLabels).unwrap();
        let plan = plan_attack(&g, g.labels(), &q, &AttackConfig::default(), |_| -1.0).unwrap();
        assert_eq!(plan.edges_used, 0);
        assert!(plan.notes.iter().any(|n| n.contains("isolated")));
    }

    #[test]
    fn exact_first_pick_is_exhaustive_argmax() {
        let g = toy::graph();
        let q = toy_query();
        let cfg = AttackConfig {
            budget: 1,
            mode: AttackMode::Exact,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&g, g.labels(), &q, &cfg, |_| -1.0).unwrap();
        let mut best = (usize::MAX, f64::MIN);
        for u in [toy::U2, toy::U3, toy::U6, toy::U7, toy::U8] {
            let mut ov = EdgeOverlay::new(&g, toy::V).unwrap();
            ov.toggle(u).unwrap();
            let val = crate::influence::objective_exact(&ov, g.labels(), &q).unwrap();
            if val > best.1 {
                best = (u, val);
            }
        }
        assert_eq!(plan.toggles[0].node, best.0);
        assert!((plan.objective_trace[0].gain - best.1).abs() < 1e-12);
    }

    #[test]
    fn estimated_labels_need_a_victim() {
        let g = toy::graph();
        assert!(resolve_labels::<Victim>(&g, None, LabelSource::EstimatedLabels).is_err());
        assert_eq!(
            resolve_labels::<Victim>(&g, None, LabelSource::TrueLabels).unwrap(),
            g.labels()
        );
    }
}
